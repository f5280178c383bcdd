/** Gateway API payloads (see docs/formats.md in the repository root). */

export interface Sample {
  node: string;
  metric: string;
  timestamp: number;
  value: string;
}

export interface Ack {
  by: string;
  at: number;
}

export interface AlarmView {
  node: string;
  metric: string;
  value: string;
  first_seen: number;
  last_seen: number;
  ack: Ack | null;
  escalation: boolean;
}

export interface RuleInputView {
  var: string;
  metric: string;
  node: string;
  count: number | null;
  predicate: string | null;
}

export interface RuleView {
  node: string;
  name: string;
  condition: string;
  cooldown: number;
  enabled: boolean;
  inputs: RuleInputView[];
  actuator: { cmd: string; args: string };
}

export interface NodeView {
  name: string;
  production_state: string;
  profile_version: number | null;
  profile_hash: string | null;
  services: Record<string, boolean>;
}
