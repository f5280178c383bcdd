"""Package-management tests: version ordering properties, reconciliation
against the desired set, ACL-guarded repository, prefetch, and transactional
apply under injected failures and crashes."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fabmgr.httpkit import HttpError
from fabmgr.spm import (ApplyFailed, DiffError, DuplicateRef, HttpSwRepClient,
                        InProcessSwRepClient, PackageOp, PackageRef,
                        PackageTransaction, PrefetchError, SimulatedPackager,
                        Spma, SpmaPolicy, SwRep, SwRepClientPool,
                        SwRepHttpServer, Unauthorized, VersionError,
                        cache_prefetch, compare_versions, format_config_file,
                        load_config_file, parse_version, sha256, spma_diff)

versions = st.builds(
    lambda nums, rel: ".".join(map(str, nums)) + (f"-{rel}" if rel else ""),
    st.lists(st.integers(0, 20), min_size=1, max_size=4),
    st.one_of(st.just(""), st.from_regex(r"[A-Za-z0-9][A-Za-z0-9.]{0,3}", fullmatch=True)))


# ---------------------------------------------------------------------------
# Version ordering


def test_version_parse():
    assert parse_version("1.2.10") == ((1, 2, 10), "")
    assert parse_version("2.0-3b") == ((2, 0), "3b")
    with pytest.raises(VersionError):
        parse_version("not-a-version!")
    with pytest.raises(VersionError):
        parse_version("")


def test_version_order_examples():
    assert compare_versions("1.2", "1.10") < 0       # numeric, not lexicographic
    assert compare_versions("1.2", "1.2.0") < 0      # shorter is older on tie-prefix
    assert compare_versions("1.2-1", "1.2-2") < 0    # release lexicographic
    assert compare_versions("1.2", "1.2-1") < 0      # no release sorts first
    assert compare_versions("3.0", "3.0") == 0


@given(versions, versions)
def test_version_antisymmetry(a, b):
    assert compare_versions(a, b) == -compare_versions(b, a)
    if compare_versions(a, b) == 0:
        assert compare_versions(b, a) == 0


@given(versions, versions, versions)
@settings(max_examples=300)
def test_version_transitivity(a, b, c):
    if compare_versions(a, b) <= 0 and compare_versions(b, c) <= 0:
        assert compare_versions(a, c) <= 0


# ---------------------------------------------------------------------------
# Diff


def _ref(name, version, arch="x86_64", url="repo://main"):
    return PackageRef(name, version, arch, url)


def test_diff_identical_is_empty():
    desired = [_ref("foo", "1.1"), _ref("bar", "2.0")]
    installed = {("foo", "x86_64"): "1.1", ("bar", "x86_64"): "2.0"}
    assert spma_diff(desired, installed).ops == ()


def test_diff_mixed_transaction():
    desired = [_ref("foo", "1.2"), _ref("bar", "2.0")]
    installed = {("foo", "x86_64"): "1.1", ("baz", "x86_64"): "0.9"}
    txn = spma_diff(desired, installed)
    kinds = {(op.name, op.kind) for op in txn.ops}
    assert kinds == {("foo", "upgrade"), ("bar", "install"), ("baz", "remove")}
    foo = next(op for op in txn.ops if op.name == "foo")
    assert foo.from_version == "1.1" and foo.to_version == "1.2"


def test_diff_downgrade():
    txn = spma_diff([_ref("foo", "1.1")], {("foo", "x86_64"): "1.2"})
    assert txn.ops[0].kind == "downgrade"


def test_diff_conflicting_desired():
    with pytest.raises(DiffError):
        spma_diff([_ref("foo", "1.1"), _ref("foo", "1.2")], {})


def test_diff_light_mode_never_removes_outside_prefix():
    policy = SpmaPolicy("light", ("grid-", "edg-"))
    desired = [_ref("grid-tool", "2.0"), _ref("vendor-thing", "9.9")]
    installed = {("grid-tool", "x86_64"): "1.0",
                 ("vendor-thing", "x86_64"): "1.0",
                 ("edg-old", "x86_64"): "0.1"}
    txn = spma_diff(desired, installed, policy)
    kinds = {(op.name, op.kind) for op in txn.ops}
    assert kinds == {("grid-tool", "upgrade"), ("edg-old", "remove")}
    # vendor-thing: not upgraded (desired filtered) and never removed


def _random_pair(rng):
    names = [f"pkg{i}" for i in range(rng.randrange(0, 10))]
    archs = ["x86_64", "i386"]
    desired, installed = [], {}
    for name in names:
        arch = rng.choice(archs)
        v1 = f"{rng.randrange(3)}.{rng.randrange(3)}"
        v2 = f"{rng.randrange(3)}.{rng.randrange(3)}"
        r = rng.random()
        if r < 0.4:
            desired.append(_ref(name, v1, arch))
            installed[(name, arch)] = v2
        elif r < 0.7:
            desired.append(_ref(name, v1, arch))
        else:
            installed[(name, arch)] = v2
    return desired, installed


def test_diff_apply_oracle_random_pairs():
    """apply(diff(d, i), i) == d with an independent op interpreter."""
    rng = random.Random(1234)
    for _ in range(500):
        desired, installed = _random_pair(rng)
        txn = spma_diff(desired, installed)
        state = dict(installed)
        for op in txn.ops:  # independent interpretation of the op stream
            k = (op.name, op.arch)
            if op.kind == "remove":
                assert k in state
                del state[k]
            elif op.kind == "install":
                assert k not in state
                state[k] = op.to_version
            else:
                assert state[k] == op.from_version
                state[k] = op.to_version
        want = {(r.name, r.arch): r.version for r in desired}
        assert state == want
        # and no two ops touch the same package
        touched = [(op.name, op.arch) for op in txn.ops]
        assert len(touched) == len(set(touched))


# ---------------------------------------------------------------------------
# SWRep


def test_swrep_acl_and_listing(tmp_path):
    repo = SwRep(str(tmp_path), acl={"builder-cred": ["grid-"], "admin": [""]})
    ref = PackageRef("grid-tool", "1.0", "x86_64")
    with pytest.raises(Unauthorized):
        repo.upload(b"payload", ref, "wrong-cred")
    with pytest.raises(Unauthorized):
        repo.upload(b"payload", PackageRef("vendor-x", "1.0", "x86_64"), "builder-cred")
    assert repo.list_packages() == []  # unchanged after refusals

    stored = repo.upload(b"payload", ref, "builder-cred")
    assert stored.digest == sha256(b"payload")
    listed = repo.list_packages()
    assert len(listed) == 1 and listed[0].digest == stored.digest
    with pytest.raises(DuplicateRef):
        repo.upload(b"other", ref, "admin")
    assert repo.fetch(ref.filename) == b"payload"


def test_swrep_http_surface(tmp_path):
    repo = SwRep(str(tmp_path), acl={"cred": [""]})
    server = SwRepHttpServer(repo)
    try:
        client = HttpSwRepClient(server.url, credential="cred")
        ref = PackageRef("tool", "2.1-1", "noarch")
        digest = client.upload(b"bits", ref)
        assert digest == sha256(b"bits")
        assert client.fetch(PackageRef("tool", "2.1-1", "noarch")) == b"bits"
        idx = client.index()
        assert [(r.name, r.version, r.arch) for r in idx] == [("tool", "2.1-1", "noarch")]

        bad = HttpSwRepClient(server.url, credential="nope")
        with pytest.raises(HttpError) as e:
            bad.upload(b"x", PackageRef("other", "1", "noarch"))
        assert e.value.status == 403
    finally:
        server.close()


# ---------------------------------------------------------------------------
# Prefetch


class DictFetcher:
    def __init__(self, payloads, fail=()):
        self.payloads = dict(payloads)
        self.fail = set(fail)
        self.fetches = []

    def fetch(self, ref):
        self.fetches.append(ref.filename)
        if ref.filename in self.fail:
            raise OSError("unreachable")
        return self.payloads[ref.filename]


def _txn(*refs):
    return PackageTransaction(tuple(
        PackageOp("install", r.name, r.arch, r, to_version=r.version) for r in refs))


def test_prefetch_verifies_digests(tmp_path):
    payload = b"content"
    ref = PackageRef("a", "1", "noarch", "u", sha256(payload))
    fetcher = DictFetcher({ref.filename: payload})
    assert cache_prefetch(_txn(ref), str(tmp_path), fetcher) == 1
    assert (tmp_path / ref.filename).read_bytes() == payload
    # second run is a cache hit
    assert cache_prefetch(_txn(ref), str(tmp_path), fetcher) == 0
    assert fetcher.fetches == [ref.filename]


def test_prefetch_digest_mismatch_aborts(tmp_path):
    ref = PackageRef("a", "1", "noarch", "u", digest="0" * 64)
    with pytest.raises(PrefetchError):
        cache_prefetch(_txn(ref), str(tmp_path), DictFetcher({ref.filename: b"wrong"}))


def test_prefetch_failure_aborts_before_apply(tmp_path):
    ok = PackageRef("a", "1", "noarch", "u")
    bad = PackageRef("b", "1", "noarch", "u")
    fetcher = DictFetcher({ok.filename: b"x", bad.filename: b"y"}, fail={bad.filename})
    with pytest.raises(PrefetchError):
        cache_prefetch(_txn(ok, bad), str(tmp_path), fetcher)


# ---------------------------------------------------------------------------
# Transactional apply


class CrashNow(Exception):
    pass


def _seed_node(tmp_path, installed):
    root = tmp_path / "node"
    cache = tmp_path / "cache"
    cache.mkdir(exist_ok=True)
    pk = SimulatedPackager(str(root))
    if installed:
        ops, refs = [], []
        for (name, arch), version in installed.items():
            ref = PackageRef(name, version, arch, "u")
            refs.append(ref)
            ops.append(PackageOp("install", name, arch, ref, to_version=version))
            (cache / ref.filename).write_bytes(f"payload {name} {version}".encode())
        pk.apply(PackageTransaction(tuple(ops)), str(cache))
    return pk, root, cache


def test_apply_empty_transaction(tmp_path):
    pk, _, cache = _seed_node(tmp_path, {})
    pk.apply(PackageTransaction(()), str(cache))
    assert pk.installed() == {}


def test_apply_end_to_end(tmp_path):
    pk, _, cache = _seed_node(tmp_path, {("foo", "x86_64"): "1.1", ("baz", "noarch"): "0.9"})
    desired = [PackageRef("foo", "1.2", "x86_64", "u"), PackageRef("bar", "2.0", "noarch", "u")]
    for r in desired:
        (cache / r.filename).write_bytes(f"payload {r.name} {r.version}".encode())
    txn = spma_diff(desired, pk.installed())
    pk.apply(txn, str(cache))
    assert pk.installed() == {("foo", "x86_64"): "1.2", ("bar", "noarch"): "2.0"}
    snap = pk.snapshot()
    assert snap["files"]["foo.x86_64"] == b"payload foo 1.2"
    assert "baz.noarch" not in snap["files"]


def test_apply_failure_on_third_of_five_leaves_db_unchanged(tmp_path):
    pk, root, cache = _seed_node(tmp_path, {})
    refs = [PackageRef(f"p{i}", "1.0", "noarch", "u") for i in range(5)]
    for i, r in enumerate(refs):
        if i != 2:  # third payload missing from the cache
            (cache / r.filename).write_bytes(b"x")
    before = pk.snapshot()
    with pytest.raises(ApplyFailed):
        pk.apply(_txn(*refs), str(cache))
    assert pk.snapshot() == before
    assert json.load(open(root / "installed.json")) if (root / "installed.json").exists() else {} == {}


def test_apply_validation_failures(tmp_path):
    pk, _, cache = _seed_node(tmp_path, {("foo", "noarch"): "1.0"})
    (cache / "foo-1.0.noarch").write_bytes(b"x")
    dup = PackageTransaction((
        PackageOp("upgrade", "foo", "noarch", PackageRef("foo", "2.0", "noarch", "u"),
                  from_version="1.0", to_version="2.0"),
        PackageOp("remove", "foo", "noarch", from_version="1.0")))
    with pytest.raises(ApplyFailed, match="twice"):
        pk.apply(dup, str(cache))
    stale = PackageTransaction((
        PackageOp("upgrade", "foo", "noarch", PackageRef("foo", "2.0", "noarch", "u"),
                  from_version="0.5", to_version="2.0"),))
    with pytest.raises(ApplyFailed, match="expected"):
        pk.apply(stale, str(cache))


def test_crash_injection_every_journal_step(tmp_path):
    """Crash at every step boundary: recovery must land on exactly the pre-
    or the post-state."""
    # dry run to learn the step labels
    labels = []
    pk, root, cache = _seed_node(tmp_path, {("keep", "noarch"): "1.0",
                                            ("old", "noarch"): "0.1"})
    desired = [PackageRef("keep", "2.0", "noarch", "u"), PackageRef("new", "1.0", "noarch", "u")]
    for r in desired:
        (cache / r.filename).write_bytes(f"payload {r.name} {r.version}".encode())
    pre = pk.snapshot()
    pk.fault_hook = labels.append
    txn = spma_diff(desired, pk.installed())
    pk.apply(txn, str(cache))
    post = pk.snapshot()
    assert pre != post
    assert len(labels) >= 7

    for crash_at in labels:
        sub = tmp_path / f"step-{crash_at.replace(':', '_')}"
        sub.mkdir()
        pk2, _, cache2 = _seed_node(sub, {("keep", "noarch"): "1.0",
                                          ("old", "noarch"): "0.1"})
        for r in desired:
            (cache2 / r.filename).write_bytes(f"payload {r.name} {r.version}".encode())

        def crash(step, at=crash_at):
            if step == at:
                raise CrashNow(step)

        pk2.fault_hook = crash
        with pytest.raises(CrashNow):
            pk2.apply(spma_diff(desired, pk2.installed()), str(cache2))
        recovered = SimulatedPackager(str(sub / "node"))  # fresh process
        got = recovered.snapshot()
        assert got in (pre, post), f"crash at {crash_at} left a partial state"


def test_light_mode_out_of_prefix_bit_identical(tmp_path):
    pk, _, cache = _seed_node(tmp_path, {("vendor-x", "noarch"): "3.3",
                                         ("grid-a", "noarch"): "1.0"})
    before = pk.snapshot()
    policy = SpmaPolicy("light", ("grid-",))
    desired = [PackageRef("grid-a", "1.1", "noarch", "u")]
    (cache / "grid-a-1.1.noarch").write_bytes(b"new grid-a")
    txn = spma_diff(desired, pk.installed(), policy)
    pk.apply(txn, str(cache))
    after = pk.snapshot()
    assert after["db"][("vendor-x", "noarch")] == "3.3"
    assert after["files"]["vendor-x.noarch"] == before["files"]["vendor-x.noarch"]
    assert after["db"][("grid-a", "noarch")] == "1.1"


# ---------------------------------------------------------------------------
# Agent facade + multi-repo


def test_spma_run_multi_repo(tmp_path):
    repo_a = SwRep(str(tmp_path / "a"), acl={"c": [""]})
    repo_b = SwRep(str(tmp_path / "b"), acl={"c": [""]})
    pa = repo_a.upload(b"payload-a", PackageRef("tool-a", "1.0", "noarch"), "c")
    pb = repo_b.upload(b"payload-b", PackageRef("tool-b", "2.0", "noarch"), "c")
    pool = SwRepClientPool()
    pool.register("repo://a", InProcessSwRepClient(repo_a))
    pool.register("repo://b", InProcessSwRepClient(repo_b))

    reported = []
    pk = SimulatedPackager(str(tmp_path / "node"))
    agent = Spma("n1", pk, pool, str(tmp_path / "cache"), report=reported.append)
    desired = [PackageRef("tool-a", "1.0", "noarch", "repo://a", pa.digest),
               PackageRef("tool-b", "2.0", "noarch", "repo://b", pb.digest)]
    report = agent.run(desired)
    assert report.ok and report.operations == 2
    assert agent.installed() == {("tool-a", "noarch"): "1.0", ("tool-b", "noarch"): "2.0"}
    assert reported[-1].metric == "spma.apply.status" and reported[-1].value == "0"

    # convergence: a second run is a no-op
    report = agent.run(desired)
    assert report.ok and report.operations == 0


def test_spma_config_file_roundtrip(tmp_path):
    refs = [PackageRef("b-tool", "1.0", "noarch", "repo://x"),
            PackageRef("a-tool", "2.1-3", "x86_64", "repo://y")]
    text = format_config_file(refs)
    assert text == ("a-tool 2.1-3 x86_64 repo://y\n"
                    "b-tool 1.0 noarch repo://x\n")
    p = tmp_path / "spma.conf"
    p.write_text("# desired packages\n" + text)
    assert load_config_file(str(p)) == sorted(refs, key=lambda r: r.name)


def test_spma_failure_reports_nonzero(tmp_path):
    reported = []
    pk = SimulatedPackager(str(tmp_path / "node"))
    agent = Spma("n1", pk, DictFetcher({}, fail={"ghost-1.noarch"}),
                 str(tmp_path / "cache"), report=reported.append)
    report = agent.run([PackageRef("ghost", "1", "noarch", "u")])
    assert not report.ok
    assert reported[-1].value == "1"
    assert agent.installed() == {}
