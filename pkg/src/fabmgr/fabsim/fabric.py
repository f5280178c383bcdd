"""In-process fabric: virtual nodes running the full daemon stack (cache
manager, sensor agent, correlation engine, configuration deployer, package
agent) against real in-process central services, on one deterministic clock.
"""

from __future__ import annotations

import logging
import os
import random
import shutil
import tempfile
from dataclasses import dataclass
from typing import Optional

from ..ccm import Ccm, FetchFailed
from ..cdb import CdbService, CommitRequest, format_notification
from ..ft import CorrelationEngine
from ..monitoring import (InMemoryBackend, MeasurementRepository, MetricConfig,
                          MetricSample, Msa, Sensor, SensorRegistry, format_line)
from ..ncm import Cdispd, ComponentContext, Ncd, ServiceManager, builtin_registry
from ..spm import (InProcessSwRepClient, PackageRef, SimulatedPackager, Spma,
                   SwRep, SwRepClientPool)
from .clock import VirtualClock
from .rms import RmsStub
from .templates import WATCHED_SERVICE, fabric_store, node_names

log = logging.getLogger(__name__)

T0 = 1_060_000_000.0  # virtual epoch; timestamps must be positive integers


@dataclass
class Event:
    t: float
    node: str
    label: str
    detail: str

    def line(self, t0: float = T0) -> str:
        return f"{self.t - t0:.3f} {self.node} {self.label} {self.detail}"


class EventLog:
    def __init__(self, t0: float = T0):
        self.t0 = t0
        self.events: list[Event] = []

    def add(self, t: float, node: str, label: str, detail: str) -> None:
        self.events.append(Event(t, node, label, " ".join(str(detail).split())))

    def lines(self) -> list:
        return [e.line(self.t0) for e in self.events]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def find_order(self, expectations: list) -> Optional[str]:
        """Check that labeled events appear in order (as a subsequence); an
        expectation is ``label`` or ``node:label``.  Returns the first
        violated expectation, or None."""
        idx = 0
        for want in expectations:
            node, _, label = want.rpartition(":")
            while idx < len(self.events):
                e = self.events[idx]
                idx += 1
                if e.label == label and (not node or e.node == node):
                    break
            else:
                return want
        return None


@dataclass
class FabricConfig:
    nodes: int = 3
    proxies: int = 0
    seed: int = 0
    msa_period: float = 1.0
    ccm_poll: float = 7.0
    cdispd_period: float = 2.0
    cdispd_debounce: float = 1.0
    reconcile_every: float = 20.0
    net_latency: float = 0.02
    drain_delay: float = 1.0
    with_escalation: bool = False
    failing_repair: bool = False
    root: Optional[str] = None


class ServiceState:
    __slots__ = ("running", "starts", "wedged")

    def __init__(self, running: bool = False):
        self.running = running
        self.starts = 0
        self.wedged = False  # start attempts do not take


class VirtualNode(ServiceManager):
    """Sandboxed node: all daemon file I/O stays under ``root``."""

    def __init__(self, name: str, root: str, fabric: "Fabric"):
        self.name = name
        self.root = root
        self.fabric = fabric
        self.services: dict[str, ServiceState] = {}
        os.makedirs(root, exist_ok=True)
        # wired during spawn
        self.ccm: Ccm = None
        self.msa: Msa = None
        self.engine: CorrelationEngine = None
        self.ncd: Ncd = None
        self.cdispd: Cdispd = None
        self.spma: Spma = None
        self.local_repo: MeasurementRepository = None
        self.timers: list = []

    # -- service registry (the simulated init system) -------------------------

    def is_running(self, name: str) -> bool:
        state = self.services.get(name)
        return state.running if state else False

    def action(self, verb: str, name: str) -> None:
        state = self.services.setdefault(name, ServiceState())
        if verb in ("start", "restart"):
            state.starts += 1
            state.running = not state.wedged
            self.fabric.log(self.name, "repair", f"{verb} {name}"
                            + (" (wedged)" if state.wedged else ""))
        elif verb == "stop":
            state.running = False
        elif verb == "reload":
            self.fabric.log(self.name, "service-reload", name)
        else:
            raise ValueError(f"unknown service action {verb!r}")

    def kill_service(self, name: str) -> None:
        self.services.setdefault(name, ServiceState()).running = False

    def rules_dir(self) -> str:
        return os.path.join(self.root, "ft", "rules")


class NodeStateSensor(Sensor):
    """Reads the virtual node's live state: daemon liveness, package
    consistency, a deterministic load figure."""

    def __init__(self, node: VirtualNode, clock):
        super().__init__(clock=clock)
        self.node = node

    def sample(self, metric: str) -> str:
        if metric == "daemon.alive":
            return "1" if self.node.is_running(WATCHED_SERVICE) else "0"
        if metric == "pkg.consistent":
            return "1" if self.node.fabric.packages_consistent(self.node) else "0"
        if metric == "cpu.load":
            t = int(self.clock())
            return f"0.{(t + len(self.node.name)) % 100:02d}"
        raise ValueError(f"unknown metric {metric!r}")


class SimActuatorRunner:
    """Repair actions against the simulator instead of an init system; the
    command vocabulary mirrors what production rules would run as scripts."""

    def __init__(self, fabric: "Fabric", node: VirtualNode):
        self.fabric = fabric
        self.node = node

    def run(self, command: str, args: list, timeout: float) -> tuple:
        if command == "sim:rms-remove":
            mode = args[0] if args else "drain"
            self.fabric.rms.remove(self.node.name, mode)
            return 0, ""
        if command == "sim:rms-reinstate":
            self.fabric.rms.reinstate(self.node.name)
            return 0, ""
        if command == "sim:ncd-run":
            report = self.fabric.run_ncd(self.node, set(args) or None)
            return (0, "") if report.ok else (1, report.format_lines())
        if command == "sim:restart-service":
            self.node.action("restart", args[0] if args else WATCHED_SERVICE)
            return 0, ""
        if command == "sim:spma-run":
            report = self.fabric.run_spma(self.node)
            return (0, "") if report.ok else (1, report.message)
        if command == "sim:fail":
            return 1, "simulated repair failure"
        return 127, f"unknown simulated command {command!r}"


class _RecordingRepo:
    """Wraps the local cache so sample production is observable (metric-flow
    events) before ingestion fans out to the engine."""

    def __init__(self, repo: MeasurementRepository, watcher):
        self._repo = repo
        self._watcher = watcher

    def ingest(self, sample: MetricSample) -> None:
        self._watcher(sample)
        self._repo.ingest(sample)

    def __getattr__(self, name):
        return getattr(self._repo, name)


class SimTransport:
    """Forwards samples to the global repository over the virtual network,
    optionally via the node's assigned fan-in proxy (one extra hop)."""

    def __init__(self, fabric: "Fabric", hops: int):
        self.fabric = fabric
        self.hops = max(1, hops)

    def send(self, sample: MetricSample) -> None:
        line = format_line(sample)
        delay = self.fabric.config.net_latency * self.hops
        self.fabric.clock.schedule(delay, lambda: self.fabric.global_repo.ingest_line(line))


class Fabric:
    def __init__(self, config: FabricConfig, store=None):
        self.config = config
        self.clock = VirtualClock(start=T0)
        self.rng = random.Random(config.seed)
        self.root = config.root or tempfile.mkdtemp(prefix="fabsim-")
        self._owns_root = config.root is None
        self.eventlog = EventLog()
        self.nodes: dict[str, VirtualNode] = {}
        names = node_names(config.nodes)
        self.topology = {name: (i % config.proxies if config.proxies else None)
                         for i, name in enumerate(names)}

        # central services
        self.global_repo = MeasurementRepository(InMemoryBackend(), clock=self.clock)
        self.swrep = SwRep(os.path.join(self.root, "swrep"), acl={"fabric": [""]})
        self.swrep_pool = SwRepClientPool()
        self.swrep_pool.register("sim://swrep", InProcessSwRepClient(self.swrep))
        self.desired_packages = [("base-tool", "1.0", "noarch")]
        digests = self._seed_packages()
        store = store or fabric_store(
            names,
            packages=[(n, v, a, digests[(n, v, a)]) for n, v, a in self.desired_packages],
            with_escalation=config.with_escalation,
            failing_repair=config.failing_repair)
        self.cdb = CdbService(os.path.join(self.root, "cdb"), base=store,
                              notify=self._notify, clock=self.clock)
        self.rms = RmsStub(self.global_repo.ingest, self.clock,
                           self.clock.schedule, self.log,
                           drain_delay=config.drain_delay)
        self._watch_last: dict = {}
        self.global_repo.subscribe("*", "*", self._global_watch)

        for name in names:
            self._spawn_node(name)

    # -- package repository seeding -------------------------------------------

    def _seed_packages(self) -> dict:
        digests = {}
        for name, version, arch in self.desired_packages:
            payload = f"payload {name} {version}".encode()
            stored = self.swrep.upload(payload, PackageRef(name, version, arch), "fabric")
            digests[(name, version, arch)] = stored.digest
        return digests

    def desired_refs(self) -> list:
        refs = []
        for name, version, arch in self.desired_packages:
            digest = next(r.digest for r in self.swrep.list_packages()
                          if r.key() == (name, version, arch))
            refs.append(PackageRef(name, version, arch, "sim://swrep", digest))
        return refs

    # -- event log --------------------------------------------------------------

    def log(self, node: str, label: str, detail: str = "") -> None:
        self.eventlog.add(self.clock.now(), node, label, detail)

    def _global_watch(self, sample: MetricSample) -> None:
        if sample.metric.startswith("ft.escalated."):
            self.log(sample.node, "escalation-metric", f"{sample.metric} {sample.value}")

    def _node_watch(self, node: str, sample: MetricSample) -> None:
        if sample.metric == "daemon.alive" or sample.metric.endswith(".alive"):
            prev = self._watch_last.get((node, sample.metric))
            self._watch_last[(node, sample.metric)] = sample.value
            if sample.value == "0" and prev != "0":
                self.log(node, "exception-metric", f"{sample.metric}=0")
            elif sample.value == "1" and prev == "0":
                self.log(node, "recovery-metric", f"{sample.metric}=1")

    # -- notifications ------------------------------------------------------------

    def _notify(self, node: str, seq: int, profile_hash: str) -> None:
        vnode = self.nodes.get(node)
        if vnode is None or vnode.ccm is None:
            return
        datagram = format_notification(node, seq, profile_hash).encode()
        self.clock.schedule(self.config.net_latency,
                            lambda: vnode.ccm.handle_notification(datagram))

    # -- node wiring --------------------------------------------------------------

    def _spawn_node(self, name: str) -> None:
        node = VirtualNode(name, os.path.join(self.root, "nodes", name), self)
        # nodes come up freshly installed with the watched service running
        node.services[WATCHED_SERVICE] = ServiceState(running=True)
        self.nodes[name] = node
        clock = self.clock

        local = MeasurementRepository(InMemoryBackend(), ident=name, clock=clock)
        node.local_repo = local
        watched = _RecordingRepo(local, lambda s: self._node_watch(name, s))

        hops = 2 if self.topology.get(name) is not None else 1
        transport = SimTransport(self, hops)

        registry = SensorRegistry()
        registry.register("node", lambda n=node: NodeStateSensor(n, clock))
        configs = [MetricConfig("daemon.alive", "node", self.config.msa_period),
                   MetricConfig("pkg.consistent", "node", self.config.msa_period * 5),
                   MetricConfig("cpu.load", "node", self.config.msa_period)]
        node.msa = Msa(name, configs, watched, transport, registry,
                       clock=clock, attach="inline")
        for cfg in configs:
            phase = self.rng.uniform(0.05, cfg.period)
            node.timers.append(clock.every(cfg.period,
                                           lambda c=cfg: node.msa.poll_metric(c),
                                           phase=phase))

        node.ccm = Ccm(name, os.path.join(node.root, "ccm"),
                       fetcher=lambda n: self.cdb.fetch_profile(n),
                       clock=clock,
                       schedule_fetch=lambda: clock.schedule(0.0, self._fetch_quiet(name)))
        node.timers.append(clock.every(self.config.ccm_poll, self._fetch_quiet(name),
                                       phase=self.rng.uniform(0.1, 1.0)))

        node.spma = Spma(name, SimulatedPackager(os.path.join(node.root, "spm")),
                         self.swrep_pool, os.path.join(node.root, "spm", "cache"),
                         report=node.msa.record, clock=clock)

        node.engine = CorrelationEngine(
            name, watched, self.global_repo,
            runner=SimActuatorRunner(self, node),
            report=node.msa.record, clock=clock,
            event_hook=lambda kind, rule, detail, n=name: self._engine_event(n, kind, rule, detail))

        registry_ncm = builtin_registry()
        node.ncd = Ncd(registry_ncm, os.path.join(node.root, "ncm.lock"),
                       report_path=os.path.join(node.root, "ncm.report"),
                       report_metric=node.msa.record, node=name, clock=clock)
        node.cdispd = Cdispd(node.ccm, registry_ncm,
                             lambda comps, tree, n=node: self._ncd_run(n, comps, tree),
                             clock=clock, debounce=self.config.cdispd_debounce,
                             reconcile_every=self.config.reconcile_every)
        node.timers.append(clock.every(self.config.cdispd_period, node.cdispd.tick,
                                       phase=self.rng.uniform(0.1, 1.0)))

        self.rms.register(name)

    def _fetch_quiet(self, name: str):
        def fetch():
            try:
                self.nodes[name].ccm.fetch_and_cache()
            except FetchFailed:
                pass
        return fetch

    def _engine_event(self, node: str, kind: str, rule: str, detail: str) -> None:
        label = {"dispatch": "ft-dispatch", "outcome": "ft-outcome",
                 "escalation": "ft-escalation", "suppressed": "ft-suppressed",
                 "indeterminate": "ft-indeterminate"}.get(kind, f"ft-{kind}")
        self.log(node, label, f"{rule} {detail}")

    def _component_ctx(self, node: VirtualNode, tree) -> ComponentContext:
        return ComponentContext(
            node.name, tree, node.root, node,
            extras={"spma_run": lambda conf: self._spma_from_config(node, conf),
                    "reload_rules": lambda: node.engine.load_rules(node.rules_dir())})

    def _ncd_run(self, node: VirtualNode, components, tree):
        report = node.ncd.run(components, self._component_ctx(node, tree))
        if not report.ok or report.total_changes:
            self.log(node.name, "ncm-run",
                     f"{'ok' if report.ok else 'failed'} changes={report.total_changes}")
        return report

    def _spma_from_config(self, node: VirtualNode, config_path: str):
        from ..spm import load_config_file

        refs = load_config_file(config_path)
        report = node.spma.run(refs)
        if not report.ok or report.operations:
            self.log(node.name, "spma-apply",
                     f"{'ok' if report.ok else 'failed'} ops={report.operations}")
        return report

    def run_ncd(self, node: VirtualNode, components=None):
        entry = node.ccm.current()
        tree = entry.tree if entry else None
        if tree is None:
            raise RuntimeError(f"{node.name} has no cached profile yet")
        return self._ncd_run(node, components or set(node.ncd.registry.names()), tree)

    def run_spma(self, node: VirtualNode):
        conf = os.path.join(node.root, "spma.conf")
        return self._spma_from_config(node, conf)

    def packages_consistent(self, node: VirtualNode) -> bool:
        from ..spm import load_config_file, spma_diff

        conf = os.path.join(node.root, "spma.conf")
        if not os.path.exists(conf):
            return True
        try:
            desired = load_config_file(conf)
            return len(spma_diff(desired, node.spma.installed())) == 0
        except Exception:
            return False

    # -- lifecycle ---------------------------------------------------------------

    def settle(self, timeout: float = 60.0, step: float = 1.0) -> bool:
        """Run virtual time until every node has converged (or timeout)."""
        deadline = self.clock.now() + timeout
        while self.clock.now() < deadline:
            self.clock.run_for(step)
            if not self.divergences():
                return True
        return not self.divergences()

    def divergences(self) -> list:
        """Convergence check: cache matches the database, deployment is at a
        fixed point, installed packages equal the desired set."""
        out = []
        for name, node in self.nodes.items():
            entry = node.ccm.current()
            if entry is None:
                out.append(f"{name}: no cached profile")
                continue
            _, digest, seq = self.cdb.fetch_profile(name)
            if entry.hash != digest:
                out.append(f"{name}: cache at version {entry.version}, database at {seq}")
                continue
            want = {(r.name, r.arch): r.version for r in self.desired_refs()}
            have = node.spma.installed()
            if have != want:
                missing = set(want) - set(have)
                extra = set(have) - set(want)
                out.append(f"{name}: packages diverged (missing={sorted(missing)}, "
                           f"extra={sorted(extra)})")
            if not node.is_running(WATCHED_SERVICE):
                out.append(f"{name}: service {WATCHED_SERVICE} not running")
        return out

    def assert_converged(self, timeout: float = 60.0) -> None:
        if not self.settle(timeout):
            raise AssertionError("fabric did not converge:\n  " +
                                 "\n  ".join(self.divergences()))
        # NCM fixed point: an immediate rerun changes nothing
        for node in self.nodes.values():
            report = self.run_ncd(node)
            if not report.ok or report.total_changes:
                raise AssertionError(
                    f"{node.name} is not at a fixed point:\n{report.format_lines()}")

    # -- fault injection ------------------------------------------------------------

    def inject_fault(self, node_name: str, kind: str, arg: str = "") -> None:
        node = self.nodes[node_name]
        self.log(node_name, "inject", f"{kind} {arg}".strip())
        if kind == "daemon-kill":
            node.kill_service(arg or WATCHED_SERVICE)
        elif kind == "daemon-wedge":
            state = node.services.setdefault(arg or WATCHED_SERVICE, ServiceState())
            state.running = False
            state.wedged = True
        elif kind == "package-corrupt":
            name, _, arch = (arg or "base-tool.noarch").rpartition(".")
            db_path = node.spma.packager.db_path
            import json
            with open(db_path, encoding="utf-8") as f:
                db = json.load(f)
            key = f"{name}:{arch}"
            if key not in db:
                raise ValueError(f"{node_name} has no installed package {key}")
            db[key]["version"] = "0.0"
            with open(db_path, "w", encoding="utf-8") as f:
                json.dump(db, f)
            payload = os.path.join(node.spma.packager.pkg_dir, f"{name}.{arch}")
            if os.path.exists(payload):
                with open(payload, "ab") as f:
                    f.write(b"\ncorruption\n")
        elif kind == "config-drift":
            rel = arg or "etc/motd"
            target = os.path.join(node.root, rel)
            os.makedirs(os.path.dirname(target), exist_ok=True)
            with open(target, "a", encoding="utf-8") as f:
                f.write("drifted\n")
        elif kind == "engine-restart":
            node.engine.unsubscribe_all()
            node.engine = CorrelationEngine(
                node.name, _RecordingRepo(node.local_repo,
                                          lambda s, n=node.name: self._node_watch(n, s)),
                self.global_repo, runner=SimActuatorRunner(self, node),
                report=node.msa.record, clock=self.clock,
                event_hook=lambda kind2, rule, detail, n=node.name:
                    self._engine_event(n, kind2, rule, detail))
            node.engine.load_rules(node.rules_dir())
            self.log(node_name, "engine-restart", "")
        else:
            raise ValueError(f"unknown fault kind {kind!r}")

    def commit_change(self, author: str, template: str, path: str, literal: str):
        src = self.cdb.current_store().source(template)
        if src is None:
            raise ValueError(f"no template {template!r}")
        new = src + f'"{path}" = {literal};\n'
        version = self.cdb.commit(CommitRequest(author, {template: new}))
        self.log("cdb", "commit", f"{author} {template} v{version.seq}")
        return version

    def close(self) -> None:
        for node in self.nodes.values():
            for timer in node.timers:
                timer.cancel()
        if self._owns_root:
            shutil.rmtree(self.root, ignore_errors=True)


def spawn_fabric(config: FabricConfig, store=None, settle: bool = True) -> Fabric:
    fabric = Fabric(config, store=store)
    if settle:
        fabric.settle(timeout=60.0)
    return fabric
