"""Pluggable system packager with a journaled, transactional default.

The simulated packager materializes installed packages as
``<root>/pkgs/<name>.<arch>`` payload files plus ``<root>/installed.json``.
A whole transaction is applied all-or-nothing through a two-phase journal:

    prepare: journal written, payloads staged as *.staged, new db staged
    commit:  journal flips to "commit", staged files promoted, removes done,
             db swapped, journal deleted

A crash before the commit flip rolls back to the pre-state; after it,
recovery rolls forward to the post-state.  ``fault_hook`` is called at every
step boundary so tests can crash the process at each point.
"""

from __future__ import annotations

import json
import os
import shutil
import time as _time
from typing import Callable, Optional

from .spma import PackageTransaction, SpmaError, cache_path


class ApplyFailed(SpmaError):
    pass


class SimulatedPackager:
    def __init__(self, root: str,
                 fault_hook: Optional[Callable[[str], None]] = None,
                 clock: Callable[[], float] = _time.time):
        self.root = root
        self.pkg_dir = os.path.join(root, "pkgs")
        self.db_path = os.path.join(root, "installed.json")
        self.journal_path = os.path.join(root, "journal.json")
        self.fault_hook = fault_hook or (lambda step: None)
        self.clock = clock
        os.makedirs(self.pkg_dir, exist_ok=True)
        self.recover()

    # -- installed database ----------------------------------------------------

    def installed(self) -> dict:
        """(name, arch) -> version"""
        db = self._load_db()
        return {tuple(k.split(":", 1)): v["version"] for k, v in db.items()}

    def _load_db(self) -> dict:
        try:
            with open(self.db_path, encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError:
            return {}

    def _payload_path(self, name: str, arch: str, staged: bool = False) -> str:
        fn = f"{name}.{arch}" + (".staged" if staged else "")
        return os.path.join(self.pkg_dir, fn)

    # -- transaction application ---------------------------------------------------

    def apply(self, txn: PackageTransaction, cache_dir: str) -> None:
        if not txn.ops:
            return
        db = self._load_db()
        self._validate(txn, db)

        new_db = dict(db)
        promotes, removes = [], []
        for op in txn.ops:
            key = f"{op.name}:{op.arch}"
            if op.kind == "remove":
                del new_db[key]
                removes.append(f"{op.name}.{op.arch}")
            else:
                new_db[key] = {"version": op.to_version,
                               "installed_at": int(self.clock())}
                promotes.append(f"{op.name}.{op.arch}")

        journal = {"phase": "prepare", "promotes": promotes, "removes": removes}
        try:
            self.fault_hook("journal-prepare")
            self._write_json(self.journal_path, journal)
            for op in txn.payload_ops():
                self.fault_hook(f"stage:{op.name}")
                src = cache_path(cache_dir, op.ref)
                if not os.path.exists(src):
                    raise ApplyFailed(f"payload for {op.ref.filename} not in cache")
                shutil.copyfile(src, self._payload_path(op.name, op.arch, staged=True))
            self.fault_hook("db-stage")
            self._write_json(self.db_path + ".new", new_db)
        except ApplyFailed:
            self._rollback()
            raise
        except Exception:
            # crash simulation: leave everything where it fell; recover()
            # will roll back because the journal still says "prepare"
            raise

        self.fault_hook("journal-commit")
        journal["phase"] = "commit"
        self._write_json(self.journal_path, journal)
        self._roll_forward(journal)

    def _validate(self, txn: PackageTransaction, db: dict) -> None:
        seen = set()
        for op in txn.ops:
            key = f"{op.name}:{op.arch}"
            if key in seen:
                raise ApplyFailed(f"transaction touches {key} twice")
            seen.add(key)
            current = db.get(key, {}).get("version")
            if op.kind == "install" and current is not None:
                raise ApplyFailed(f"{key} already installed ({current})")
            if op.kind in ("upgrade", "downgrade", "remove"):
                if current is None:
                    raise ApplyFailed(f"{key} is not installed")
                if op.from_version and current != op.from_version:
                    raise ApplyFailed(f"{key} is {current}, expected {op.from_version}")

    def _roll_forward(self, journal: dict) -> None:
        for fn in journal.get("promotes", ()):
            self.fault_hook(f"promote:{fn}")
            staged = os.path.join(self.pkg_dir, fn + ".staged")
            if os.path.exists(staged):
                os.replace(staged, os.path.join(self.pkg_dir, fn))
        for fn in journal.get("removes", ()):
            self.fault_hook(f"remove:{fn}")
            try:
                os.unlink(os.path.join(self.pkg_dir, fn))
            except FileNotFoundError:
                pass
        self.fault_hook("db-promote")
        if os.path.exists(self.db_path + ".new"):
            os.replace(self.db_path + ".new", self.db_path)
        self.fault_hook("journal-clear")
        try:
            os.unlink(self.journal_path)
        except FileNotFoundError:
            pass

    def _rollback(self) -> None:
        for fn in os.listdir(self.pkg_dir):
            if fn.endswith(".staged"):
                os.unlink(os.path.join(self.pkg_dir, fn))
        for path in (self.db_path + ".new", self.journal_path):
            try:
                os.unlink(path)
            except FileNotFoundError:
                pass

    def recover(self) -> str:
        """Crash recovery on startup: pre-state for an unfinished prepare,
        post-state for an interrupted commit; never anything in between."""
        try:
            with open(self.journal_path, encoding="utf-8") as f:
                journal = json.load(f)
        except (FileNotFoundError, json.JSONDecodeError):
            self._rollback()  # clears stray staged files / .new without a journal
            return "clean"
        if journal.get("phase") == "commit":
            self._roll_forward(journal)
            return "rolled-forward"
        self._rollback()
        return "rolled-back"

    @staticmethod
    def _write_json(path: str, payload: dict) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=0, sort_keys=True)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)

    # -- state inspection (tests, status displays) -------------------------------

    def snapshot(self) -> dict:
        """Visible state: installed map plus payload file contents."""
        out = {"db": self.installed(), "files": {}}
        for fn in sorted(os.listdir(self.pkg_dir)):
            if fn.endswith(".staged") or fn.endswith(".tmp"):
                continue
            with open(os.path.join(self.pkg_dir, fn), "rb") as f:
                out["files"][fn] = f.read()
        return out
