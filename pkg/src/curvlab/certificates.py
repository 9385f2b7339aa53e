"""Pass/fail records for verification stages and their deterministic serialization."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ReplayError


def fmt(x) -> str:
    """Shortest text that round-trips a float bit-for-bit."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


@dataclass
class Quantity:
    key: str
    value: float
    tol: float
    passed: bool

    def as_dict(self):
        return {"key": self.key, "value": fmt(self.value), "tol": fmt(self.tol), "pass": bool(self.passed)}


@dataclass
class Stage:
    name: str
    quantities: list = field(default_factory=list)

    def add(self, key, value, tol, passed):
        self.quantities.append(Quantity(key, float(value), float(tol), bool(passed)))
        return bool(passed)

    def at_least(self, key, value, bound):
        """Record value >= bound; tol holds the bound."""
        return self.add(key, value, bound, value >= bound)

    def at_most(self, key, value, bound):
        return self.add(key, value, bound, value <= bound)

    def info(self, key, value):
        """A reported number that carries no pass condition."""
        return self.add(key, value, float("nan"), True)

    @property
    def passed(self):
        return all(q.passed for q in self.quantities)

    def get(self, key):
        for q in self.quantities:
            if q.key == key:
                return q
        raise KeyError(key)

    def as_dict(self):
        return {"name": self.name, "quantities": [q.as_dict() for q in self.quantities]}


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Certificate:
    suite: str
    model: str
    config: dict
    seed: int
    stages: list = field(default_factory=list)
    runtime: float = 0.0

    def stage(self, name) -> Stage:
        st = Stage(name)
        self.stages.append(st)
        return st

    def find(self, name) -> Stage:
        for st in self.stages:
            if st.name == name:
                return st
        raise KeyError(name)

    @property
    def passed(self):
        return all(st.passed for st in self.stages)

    @property
    def config_hash(self):
        return config_hash(self.config)

    def failures(self):
        return [(st.name, q) for st in self.stages for q in st.quantities if not q.passed]

    def as_dict(self):
        # runtime stays out so that equal inputs give equal bytes
        return {
            "suite": self.suite,
            "model": self.model,
            "config_hash": self.config_hash,
            "config": self.config,
            "seed": int(self.seed),
            "stages": [st.as_dict() for st in self.stages],
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "sample", "quantity", "value", "tol", "pass"])
        for st in self.stages:
            for q in st.quantities:
                name, _, sample = q.key.partition("@")
                w.writerow([st.name, sample, name, fmt(q.value), fmt(q.tol), int(q.passed)])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d):
        cert = cls(d["suite"], d["model"], d.get("config", {}), d["seed"])
        for sd in d["stages"]:
            st = cert.stage(sd["name"])
            for q in sd["quantities"]:
                st.quantities.append(Quantity(q["key"], float(q["value"]), float(q["tol"]), bool(q["pass"])))
        if d.get("config_hash") and d["config_hash"] != cert.config_hash:
            raise ReplayError("stored config hash does not match stored config")
        return cert


def emit_certificate(cert: Certificate, path, format="json") -> Path:
    """Write a certificate as JSON or CSV; returns the path written."""
    path = Path(path)
    if format == "json":
        text = cert.to_json()
    elif format == "csv":
        text = cert.to_csv()
    else:
        raise ValueError(f"unknown certificate format {format!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def load_certificate(path) -> Certificate:
    return Certificate.from_dict(json.loads(Path(path).read_text()))
