"""Rule-based fault tolerance: decision unit and actuator agent."""

from .engine import (ActuatorOutcome, CorrelationEngine, Decision,
                     ExecActuatorRunner)
from .rules import (Actuator, Rule, RuleError, RuleInput, load_rules_dir,
                    parse_rule, serialize_rule)

__all__ = [
    "Actuator", "ActuatorOutcome", "CorrelationEngine", "Decision",
    "ExecActuatorRunner", "Rule", "RuleError", "RuleInput", "load_rules_dir",
    "parse_rule", "serialize_rule",
]
