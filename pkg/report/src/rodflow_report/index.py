"""Discovery and validation of run directories."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass


class ReportError(RuntimeError):
    """A run directory or its artifacts cannot be consumed."""


@dataclass
class RunRecord:
    path: str
    manifest: dict

    @property
    def run_id(self):
        return os.path.basename(os.path.normpath(self.path))

    @property
    def mode(self):
        return self.manifest["config"]["mode"]

    @property
    def config(self):
        return self.manifest["config"]

    def gamma_e(self):
        res = self.config["resistance"]
        if res == "sphere":
            return 0.0
        if res == "anisotropic":
            return 1.0
        return float(res["gamma_E"])

    def diagnostics(self):
        with open(os.path.join(self.path, "diagnostics.json")) as fh:
            return json.load(fh)

    def artifact(self, name):
        p = os.path.join(self.path, name)
        if not os.path.exists(p):
            raise ReportError(f"{self.run_id}: missing artifact {name}")
        return p


class RunIndex:
    """All run directories under a root, with parsed manifests.

    A subdirectory counts as a run if it contains manifest.json or any of
    the artifacts a run would produce; a run-like directory whose manifest
    is missing or corrupt is refused rather than skipped.
    """

    RUN_MARKERS = ("manifest.json", "diagnostics.json")

    def __init__(self, runs):
        self.runs = list(runs)

    @classmethod
    def discover(cls, root):
        if not os.path.isdir(root):
            raise ReportError(f"runs root {root!r} is not a directory")
        runs = []
        for name in sorted(os.listdir(root)):
            path = os.path.join(root, name)
            if not os.path.isdir(path):
                continue
            contents = os.listdir(path)
            run_like = any(m in contents for m in cls.RUN_MARKERS) or any(
                f.endswith(".csv") for f in contents
            )
            if not run_like:
                continue
            mpath = os.path.join(path, "manifest.json")
            if not os.path.exists(mpath):
                raise ReportError(f"run directory {name!r} has no manifest.json")
            try:
                with open(mpath) as fh:
                    manifest = json.load(fh)
                manifest["config"]["mode"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ReportError(f"run directory {name!r} has a corrupt manifest: {exc}") from exc
            runs.append(RunRecord(path, manifest))
        if not runs:
            raise ReportError(f"no run directories found under {root!r}")
        return cls(runs)

    def by_mode(self, mode):
        return [r for r in self.runs if r.mode == mode]


def read_csv_columns(path, required=()):
    """Load a CSV into {column: list}; floats where they parse as floats."""
    with open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ReportError(f"{path}: empty CSV")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise ReportError(f"{path}: missing columns {missing}")
        cols = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name, val in row.items():
                try:
                    val = float(val)
                except (TypeError, ValueError):
                    pass
                cols[name].append(val)
    return cols
