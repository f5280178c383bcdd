"""fabctl: operator command line for the fabric-management toolkit."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import pan
from .ccm import Ccm, CacheEmpty, FetchFailed, HttpProfileFetcher, PathNotFound
from .httpkit import HttpError, http_get, http_post_json
from .ncm import ComponentContext, Ncd, NcdError, NullServiceManager, aii_generate, builtin_registry
from .spm import (SimulatedPackager, Spma, SpmaPolicy, SwRepClientPool,
                  load_config_file, spma_diff)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_COMPILE = 2


def cmd_compile(args) -> int:
    store = pan.TemplateStore.from_dir(args.store)
    try:
        compiled = pan.compile_profile(args.node, store)
    except pan.PanError as e:
        print(f"compile error: {e}", file=sys.stderr)
        return EXIT_COMPILE
    if args.output:
        with open(args.output, "wb") as f:
            f.write(compiled.document)
        print(f"{args.node} {compiled.hash} -> {args.output}")
    else:
        sys.stdout.write(compiled.document.decode("utf-8"))
    return EXIT_OK


def cmd_ccm_get(args) -> int:
    ccm = Ccm(args.node, args.cache_dir,
              fetcher=HttpProfileFetcher(args.cdb_url) if args.cdb_url else _no_fetch)
    if args.fetch:
        try:
            ccm.fetch_and_cache()
        except FetchFailed as e:
            print(f"fetch failed ({e}); serving cached profile", file=sys.stderr)
    try:
        tag, value = ccm.get(args.path)
    except CacheEmpty:
        print("no cached profile", file=sys.stderr)
        return EXIT_ERROR
    except PathNotFound as e:
        print(f"not found: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{tag} {pan.encode_value(tag, value)}")
    return EXIT_OK


def _no_fetch(node):
    raise FetchFailed("no configuration database URL configured")


def cmd_metrics(args) -> int:
    t0 = 0
    if args.since:
        t0 = int(time.time()) - args.since
    url = (f"{args.repo_url}/api/series?node={args.node}&metric={args.metric}"
           f"&t0={t0}&t1={2**62}")
    try:
        _, _, body = http_get(url)
    except (HttpError, OSError) as e:
        print(f"query failed: {e}", file=sys.stderr)
        return EXIT_ERROR
    for s in json.loads(body)["samples"]:
        print(f"{s['timestamp']} {s['value']}")
    return EXIT_OK


def cmd_ncd_run(args) -> int:
    with open(args.profile, "rb") as f:
        _, tree = pan.parse_profile(f.read())
    registry = builtin_registry()
    names = args.component or registry.names()
    ncd = Ncd(registry, os.path.join(args.root, "ncm.lock"),
              report_path=os.path.join(args.root, "ncm.report"))
    ctx = ComponentContext(args.node, tree, args.root, NullServiceManager())
    try:
        report = ncd.run(set(names), ctx)
    except NcdError as e:
        print(f"ncd: {e}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(report.format_lines())
    return EXIT_OK if report.ok else EXIT_ERROR


def cmd_aii_generate(args) -> int:
    store = pan.TemplateStore.from_dir(args.store)
    try:
        compiled = pan.compile_profile(args.node, store)
        artifacts = aii_generate(compiled.tree)
    except Exception as e:
        print(f"generation error: {e}", file=sys.stderr)
        return EXIT_COMPILE
    print("# dhcp")
    print(artifacts.dhcp_entry)
    print("# kickstart")
    sys.stdout.write(artifacts.kickstart)
    return EXIT_OK


def _spma_parts(args):
    packager = SimulatedPackager(args.root)
    policy = SpmaPolicy("light", tuple(args.light_prefix)) if args.light_prefix \
        else SpmaPolicy()
    agent = Spma(args.node, packager, SwRepClientPool(),
                 os.path.join(args.root, "cache"), policy)
    desired = load_config_file(args.config) if args.config else []
    return agent, desired


def cmd_spma(args) -> int:
    agent, desired = _spma_parts(args)
    if args.action == "status":
        installed = agent.installed()
        for (name, arch), version in sorted(installed.items()):
            print(f"{name} {version} {arch}")
        txn = spma_diff(desired, installed, agent.policy) if desired else None
        if txn is not None:
            print(f"pending operations: {len(txn)}")
        return EXIT_OK
    if args.action == "diff":
        txn = agent.diff(desired)
        for op in txn.ops:
            tail = f"{op.from_version} -> {op.to_version}" if op.from_version else op.to_version
            print(f"{op.kind} {op.name}.{op.arch} {tail}".rstrip())
        return EXIT_OK
    report = agent.run(desired)
    print(f"{'ok' if report.ok else 'failed'} operations={report.operations} "
          f"{report.message}".rstrip())
    return EXIT_OK if report.ok else EXIT_ERROR


def cmd_cdb_serve(args) -> int:
    from .cdb import CdbHttpServer, CdbService, UdpNotifier
    from .pan import TemplateStore

    with open(args.config, encoding="utf-8") as f:
        conf = json.load(f)
    endpoints = {node: tuple(addr) for node, addr in conf.get("notify", {}).items()}
    notifier = UdpNotifier(endpoints)
    base = None
    if not os.path.exists(os.path.join(conf["store_dir"], "versions.log")):
        if "seed_templates" in conf:
            base = TemplateStore.from_dir(conf["seed_templates"])
    service = CdbService(conf["store_dir"], base=base,
                         wait_for_lock=conf.get("wait_for_lock", True),
                         notify=notifier)
    server = CdbHttpServer(service, host=conf.get("listen_host", "127.0.0.1"),
                           port=conf.get("listen_port", 8069))
    print(f"configuration database on {server.url} (store {conf['store_dir']})")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return EXIT_OK
    finally:
        server.close()


def cmd_repo_serve(args) -> int:
    from .monitoring import (FlatFileBackend, InMemoryBackend,
                             MeasurementRepository, RepositoryHttpServer,
                             TcpIngestServer, UdpIngestServer)

    backend = (FlatFileBackend(args.dir) if args.backend == "flatfile"
               else InMemoryBackend())
    repo = MeasurementRepository(backend)
    http_server = RepositoryHttpServer(repo, host=args.host, port=args.http_port)
    tcp = TcpIngestServer(repo, host=args.host, port=args.tcp_port)
    udp = UdpIngestServer(repo, host=args.host, port=args.udp_port)
    print(f"repository api on {http_server.url}; "
          f"tcp ingest {tcp.address[1]}; udp ingest {udp.address[1]}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return EXIT_OK
    finally:
        udp.close()
        tcp.close()
        http_server.close()


def cmd_swrep_serve(args) -> int:
    from .spm import SwRep, SwRepHttpServer

    acl = {}
    if args.acl:
        with open(args.acl, encoding="utf-8") as f:
            acl = json.load(f)
    server = SwRepHttpServer(SwRep(args.dir, acl=acl), host=args.host, port=args.port)
    print(f"software repository on {server.url} (store {args.dir})")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return EXIT_OK
    finally:
        server.close()


def cmd_sim_spawn(args) -> int:
    from .fabsim import Fabric, FabricConfig

    fabric = Fabric(FabricConfig(nodes=args.nodes, proxies=args.proxies, seed=args.seed))
    try:
        converged = fabric.settle(timeout=args.run)
        sys.stdout.write(fabric.eventlog.text())
        if not converged:
            for d in fabric.divergences():
                print(f"divergent: {d}", file=sys.stderr)
            return EXIT_ERROR
        print(f"# fabric of {args.nodes} nodes converged")
        return EXIT_OK
    finally:
        fabric.close()


def cmd_sim_scenario(args) -> int:
    from .fabsim import (ExpectationFailed, Fabric, FabricConfig,
                         ScenarioScript, run_scenario)

    with open(args.script, encoding="utf-8") as f:
        script = ScenarioScript.parse(f.read())
    fabric = Fabric(FabricConfig(nodes=args.nodes, proxies=args.proxies, seed=args.seed,
                                 with_escalation=args.escalation,
                                 failing_repair=args.failing_repair))
    try:
        fabric.settle(timeout=60)
        try:
            run_scenario(fabric, script)
        except ExpectationFailed as e:
            sys.stdout.write(fabric.eventlog.text())
            print(f"scenario failed:\n{e}", file=sys.stderr)
            return EXIT_ERROR
        sys.stdout.write(fabric.eventlog.text())
        return EXIT_OK
    finally:
        fabric.close()


def cmd_sim_serve(args) -> int:
    from .fabsim import Fabric, FabricConfig
    from .fabsim.gateway import LiveFabric

    console_dir = args.console_dir
    if console_dir is None:
        guess = os.path.join(os.getcwd(), "frontend", "dist")
        console_dir = guess if os.path.isdir(guess) else None
    fabric = Fabric(FabricConfig(nodes=args.nodes, proxies=args.proxies, seed=args.seed,
                                 with_escalation=True))
    fabric.settle(timeout=60)
    live = LiveFabric(fabric, port=args.port, console_dir=console_dir, speed=args.speed)
    print(f"gateway on {live.gateway.url} "
          f"({'console enabled' if console_dir else 'api only'})")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return EXIT_OK
    finally:
        live.close()


def cmd_sim_inject(args) -> int:
    try:
        http_post_json(f"{args.gateway}/api/inject",
                       {"node": args.node, "kind": args.kind, "arg": args.arg or ""})
    except (HttpError, OSError) as e:
        print(f"inject failed: {e}", file=sys.stderr)
        return EXIT_ERROR
    print("injected")
    return EXIT_OK


def cmd_sim_status(args) -> int:
    try:
        _, _, body = http_get(f"{args.gateway}/api/nodes")
    except (HttpError, OSError) as e:
        print(f"status failed: {e}", file=sys.stderr)
        return EXIT_ERROR
    for node in json.loads(body)["nodes"]:
        services = " ".join(f"{k}={'up' if v else 'down'}"
                            for k, v in node["services"].items())
        print(f"{node['name']} {node['production_state']} "
              f"v{node['profile_version']} {services}")
    return EXIT_OK


def cmd_sim_scale(args) -> int:
    from .fabsim.realnet import run_monitoring_fabric

    stats = run_monitoring_fabric(args.nodes, args.proxies, args.metrics, args.ticks)
    print(f"sent={stats.sent} ingested={stats.ingested} connections={stats.connections} "
          f"inversions={stats.order_inversions} wall={stats.wall_seconds:.1f}s")
    ok = stats.sent == stats.ingested and stats.order_inversions == 0
    return EXIT_OK if ok else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fabctl",
                                description="fabric management control tool")
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("compile", help="compile a node profile from a template store")
    c.add_argument("node")
    c.add_argument("--store", required=True, help="directory of <name>.tpl templates")
    c.add_argument("-o", "--output", help="profile output file (default: stdout)")
    c.set_defaults(fn=cmd_compile)

    c = sub.add_parser("ccm", help="node configuration cache")
    csub = c.add_subparsers(dest="action", required=True)
    g = csub.add_parser("get", help="read a typed value from the cached profile")
    g.add_argument("path")
    g.add_argument("--node", default=os.uname().nodename)
    g.add_argument("--cache-dir", default="/var/cache/fabmgr/ccm")
    g.add_argument("--cdb-url", help="configuration database base URL")
    g.add_argument("--fetch", action="store_true", help="poll before reading")
    g.set_defaults(fn=cmd_ccm_get)

    c = sub.add_parser("metrics", help="query a metric time series")
    c.add_argument("node")
    c.add_argument("metric")
    c.add_argument("--since", type=int, default=0, help="seconds of history")
    c.add_argument("--repo-url", default="http://127.0.0.1:8071")
    c.set_defaults(fn=cmd_metrics)

    c = sub.add_parser("ncd", help="node configuration deployer")
    nsub = c.add_subparsers(dest="action", required=True)
    r = nsub.add_parser("run", help="run configuration components")
    r.add_argument("--component", action="append", help="component name (repeatable)")
    r.add_argument("--profile", required=True, help="compiled profile XML file")
    r.add_argument("--root", default=".", help="node filesystem root")
    r.add_argument("--node", default=os.uname().nodename)
    r.set_defaults(fn=cmd_ncd_run)

    c = sub.add_parser("aii", help="installation infrastructure artifacts")
    asub = c.add_subparsers(dest="action", required=True)
    g = asub.add_parser("generate", help="emit DHCP + installation script for a node")
    g.add_argument("node")
    g.add_argument("--store", required=True)
    g.set_defaults(fn=cmd_aii_generate)

    c = sub.add_parser("spma", help="software package management agent")
    c.add_argument("action", choices=["diff", "apply", "status"])
    c.add_argument("--root", default="/var/lib/fabmgr/spma")
    c.add_argument("--config", help="desired-package config file")
    c.add_argument("--node", default=os.uname().nodename)
    c.add_argument("--light-prefix", action="append", default=[],
                   help="light mode: only touch packages with these name prefixes")
    c.set_defaults(fn=cmd_spma)

    c = sub.add_parser("cdb", help="configuration database service")
    dsub = c.add_subparsers(dest="action", required=True)
    d = dsub.add_parser("serve", help="run the database from a config file")
    d.add_argument("--config", required=True,
                   help="JSON: {store_dir, listen_host, listen_port, "
                        "notify: {node: [host, port]}, seed_templates}")
    d.set_defaults(fn=cmd_cdb_serve)

    c = sub.add_parser("repo", help="measurement repository service")
    rsub = c.add_subparsers(dest="action", required=True)
    r = rsub.add_parser("serve", help="run the repository with all listeners")
    r.add_argument("--backend", choices=["flatfile", "memory"], default="flatfile")
    r.add_argument("--dir", default="/var/lib/fabmgr/repo")
    r.add_argument("--host", default="127.0.0.1")
    r.add_argument("--http-port", type=int, default=8071)
    r.add_argument("--tcp-port", type=int, default=8072)
    r.add_argument("--udp-port", type=int, default=8073)
    r.set_defaults(fn=cmd_repo_serve)

    c = sub.add_parser("swrep", help="software repository service")
    wsub = c.add_subparsers(dest="action", required=True)
    w = wsub.add_parser("serve", help="serve packages over HTTP")
    w.add_argument("--dir", default="/var/lib/fabmgr/swrep")
    w.add_argument("--acl", help="JSON file: {credential: [name prefixes]}")
    w.add_argument("--host", default="127.0.0.1")
    w.add_argument("--port", type=int, default=8074)
    w.set_defaults(fn=cmd_swrep_serve)

    c = sub.add_parser("sim", help="fabric simulator")
    ssub = c.add_subparsers(dest="action", required=True)

    s = ssub.add_parser("spawn", help="spawn a fabric and let it converge")
    s.add_argument("-n", "--nodes", type=int, default=3)
    s.add_argument("--proxies", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--run", type=float, default=60.0, help="virtual seconds")
    s.set_defaults(fn=cmd_sim_spawn)

    s = ssub.add_parser("scenario", help="run a scenario script")
    s.add_argument("script")
    s.add_argument("-n", "--nodes", type=int, default=3)
    s.add_argument("--proxies", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--escalation", action="store_true",
                   help="deploy escalation rules")
    s.add_argument("--failing-repair", action="store_true",
                   help="repair actuators fail (escalation demos)")
    s.set_defaults(fn=cmd_sim_scenario)

    s = ssub.add_parser("serve", help="live fabric + console gateway")
    s.add_argument("-n", "--nodes", type=int, default=5)
    s.add_argument("--proxies", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--port", type=int, default=8070)
    s.add_argument("--speed", type=float, default=1.0)
    s.add_argument("--console-dir", help="built console files (frontend/dist)")
    s.set_defaults(fn=cmd_sim_serve)

    s = ssub.add_parser("inject", help="inject a fault into a live fabric")
    s.add_argument("node")
    s.add_argument("kind", choices=["daemon-kill", "daemon-wedge", "package-corrupt",
                                    "config-drift", "engine-restart"])
    s.add_argument("arg", nargs="?")
    s.add_argument("--gateway", default="http://127.0.0.1:8070")
    s.set_defaults(fn=cmd_sim_inject)

    s = ssub.add_parser("status", help="node status of a live fabric")
    s.add_argument("--gateway", default="http://127.0.0.1:8070")
    s.set_defaults(fn=cmd_sim_status)

    s = ssub.add_parser("monitoring-scale", help="real-TCP monitoring scale run")
    s.add_argument("--nodes", type=int, default=100)
    s.add_argument("--proxies", type=int, default=10)
    s.add_argument("--metrics", type=int, default=100)
    s.add_argument("--ticks", type=int, default=60)
    s.set_defaults(fn=cmd_sim_scale)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
