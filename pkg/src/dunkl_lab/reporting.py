"""Deterministic verification reports.

A report is a named set of checks (value vs threshold) plus optional row
tables.  Serialization is made byte-reproducible across runs and BLAS
thread counts by rounding every float to 12 significant digits, sorting
all keys, and writing atomically (temp file + rename).  JSON headers carry
a git-blob-style content hash of the canonical config.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field


def round_sig(x: float) -> float:
    """Round to 12 significant digits; kills summation-order jitter."""
    if not math.isfinite(x):
        return x
    return float(f"{x:.12g}")


def _canon(obj):
    if isinstance(obj, float):
        return round_sig(obj)
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _canon(obj.item())
    return obj


def content_hash(obj) -> str:
    """Git-blob-style SHA1 of the canonical JSON encoding of obj."""
    data = json.dumps(_canon(obj), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0%s" % (len(data), data)).hexdigest()


def write_text_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(eq=False)
class Check:
    """One named inequality: value <= threshold or value >= threshold."""

    name: str
    value: float
    threshold: float
    direction: str = "<="

    def __post_init__(self):
        if self.direction not in ("<=", ">="):
            raise ValueError("direction must be '<=' or '>='")
        self.value = float(self.value)
        self.threshold = float(self.threshold)

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.direction == "<=":
            return self.value <= self.threshold
        return self.value >= self.threshold

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "direction": self.direction,
            "pass": self.passed,
        }


@dataclass(eq=False)
class VerificationReport:
    config: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def add_check(self, name, value, threshold, direction="<=") -> Check:
        c = Check(name, value, threshold, direction)
        self.checks.append(c)
        return c

    def add_table(self, name: str, rows: list) -> None:
        self.tables[name] = [dict(r) for r in rows]

    def extend(self, other: "VerificationReport", prefix: str = "") -> None:
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.value, c.threshold, c.direction))
        for name, rows in other.tables.items():
            self.tables[prefix + name] = rows

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict:
        return {
            "config": _canon(self.config),
            "config_hash": content_hash(self.config),
            "checks": [_canon(c.as_dict()) for c in sorted(self.checks, key=lambda c: c.name)],
            "tables": {k: _canon(v) for k, v in sorted(self.tables.items())},
            "pass": self.all_pass,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        """Check rows (sorted by name), then each table under a banner row."""
        buf = io.StringIO()
        buf.write("name,value,threshold,direction,pass\n")
        for c in sorted(self.checks, key=lambda c: c.name):
            buf.write(
                f"{c.name},{round_sig(c.value):.12g},{round_sig(c.threshold):.12g},"
                f"{c.direction},{str(c.passed).lower()}\n"
            )
        for name in sorted(self.tables):
            rows = self.tables[name]
            buf.write(f"#table,{name}\n")
            if not rows:
                continue
            cols = sorted({k for r in rows for k in r})
            buf.write(",".join(cols) + "\n")
            for r in rows:
                cells = []
                for cname in cols:
                    v = r.get(cname, "")
                    if isinstance(v, float):
                        cells.append(f"{round_sig(v):.12g}")
                    else:
                        cells.append(str(v))
                buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def write(self, path: str, fmt: str = "json") -> None:
        if fmt == "json":
            write_text_atomic(path, self.to_json())
        elif fmt == "csv":
            write_text_atomic(path, self.to_csv())
        else:
            raise ValueError("format must be 'json' or 'csv'")
