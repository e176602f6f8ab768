"""Result tables written by the CLI.

CSV layout: one comment line ``# {json metadata}``, the header
``analysis,source,target,step,value_nats,flag``, then one row per value.
Values are rounded to 12 significant digits before they are stored, so a
table read back from either CSV or JSON compares equal to the one written.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .transfer import DEGENERATE, NONCONVERGED, OK

FORMAT_VERSION = 1
COLUMNS = ("analysis", "source", "target", "step", "value_nats", "flag")
FLAGS = (OK, DEGENERATE, NONCONVERGED)
DIGITS = 12


def canonical(value: float) -> float:
    """Round to `DIGITS` significant digits; ``-0.0`` becomes ``0.0``."""
    value = float(f"{float(value):.{DIGITS}g}")
    return value + 0.0


def _fmt(value: float) -> str:
    return f"{value:.{DIGITS}g}"


@dataclass(frozen=True)
class Row:
    analysis: str
    source: str
    target: str
    step: int
    value_nats: float
    flag: str = OK

    def __post_init__(self):
        object.__setattr__(self, "step", int(self.step))
        value = float(self.value_nats)
        if self.flag not in FLAGS:
            raise ValueError(f"unknown flag {self.flag!r}")
        if not math.isfinite(value) and self.flag == OK:
            raise ValueError(f"non-finite value in row {self.analysis}/{self.step} without a flag")
        object.__setattr__(self, "value_nats", canonical(value) if math.isfinite(value) else value)


@dataclass
class ResultTable:
    command: str
    system_hash: str
    params: dict = field(default_factory=dict)
    rows: list[Row] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def add(self, analysis, source, target, step, value, flag=OK) -> None:
        self.rows.append(Row(analysis, source, target, step, value, flag))

    def add_series(self, analysis: str, series, source: str | None = None, target: str | None = None) -> None:
        src = source if source is not None else series.source_name
        tgt = target if target is not None else series.target_name
        for step, value, flag in zip(series.steps, series.values.tolist(), series.flags):
            self.add(analysis, src, tgt, step, value, flag)

    @property
    def metadata(self) -> dict:
        return {
            "format_version": self.format_version,
            "command": self.command,
            "system_hash": self.system_hash,
            "params": self.params,
        }

    def select(self, analysis: str) -> list[Row]:
        return [r for r in self.rows if r.analysis == analysis]

    # --- serialization -------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.metadata, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.analysis, r.source, r.target, r.step, _fmt(r.value_nats), r.flag])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = dict(self.metadata)
        doc["rows"] = [
            {
                "analysis": r.analysis,
                "source": r.source,
                "target": r.target,
                "step": r.step,
                "value_nats": r.value_nats if math.isfinite(r.value_nats) else _fmt(r.value_nats),
                "flag": r.flag,
            }
            for r in self.rows
        ]
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def write(self, path: str | Path, as_json: bool = False) -> Path:
        path = Path(path)
        path.write_text(self.to_json() if as_json else self.to_csv())
        return path

    @classmethod
    def _from_meta(cls, meta: dict) -> "ResultTable":
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported result format {meta.get('format_version')!r}")
        return cls(
            command=meta["command"],
            system_hash=meta["system_hash"],
            params=meta.get("params", {}),
        )

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        first, _, body = text.partition("\n")
        if not first.startswith("# "):
            raise ValueError("missing metadata line")
        table = cls._from_meta(json.loads(first[2:]))
        reader = csv.reader(io.StringIO(body))
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected header {header}")
        for rec in reader:
            a, s, t, step, value, flag = rec
            table.add(a, s, t, int(step), float(value), flag)
        return table

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        doc = json.loads(text)
        table = cls._from_meta(doc)
        for r in doc["rows"]:
            table.add(r["analysis"], r["source"], r["target"], r["step"], float(r["value_nats"]), r["flag"])
        return table

    @classmethod
    def read(cls, path: str | Path) -> "ResultTable":
        text = Path(path).read_text()
        return cls.from_json(text) if text.lstrip().startswith("{") else cls.from_csv(text)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResultTable):
            return NotImplemented
        return self.metadata == other.metadata and self.rows == other.rows
