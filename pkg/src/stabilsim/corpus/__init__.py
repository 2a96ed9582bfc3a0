"""Bundled reference circuit plus the expectation tables tests sweep against.

Everything here is static data shipped with the package; set the
STABILSIM_CORPUS environment variable to read the three files from another
directory instead (same names, same formats).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from ..analysis import RpmVoltageMap
from ..netlist import Netlist, parse

_FILES = ("vavs.net", "table2.csv", "rpm_map.sample.csv")


class ReferenceRow(NamedTuple):
    input_v: float
    expected_vo: float
    tolerance: float


@dataclass(frozen=True)
class ReferenceTable:
    rows: tuple[ReferenceRow, ...]
    provenance: str

    def __post_init__(self):
        if not self.provenance.strip():
            raise ValueError("provenance must be nonempty")
        if any(r.tolerance <= 0 for r in self.rows):
            raise ValueError("tolerances must be positive")

    def row_for(self, input_v: float) -> ReferenceRow:
        for r in self.rows:
            if r.input_v == input_v:
                return r
        raise KeyError(input_v)


def corpus_dir() -> Path:
    override = os.environ.get("STABILSIM_CORPUS")
    return Path(override) if override else Path(__file__).resolve().parent


def vavs_netlist() -> Netlist:
    return parse((corpus_dir() / "vavs.net").read_text())


def reference_table2() -> ReferenceTable:
    path = corpus_dir() / "table2.csv"
    provenance = ""
    rows = []
    with open(path, newline="") as fh:
        lines = []
        for raw in fh:
            if raw.lstrip().startswith("#"):
                if not provenance:
                    provenance = raw.lstrip().lstrip("#").strip()
                continue
            lines.append(raw)
    for k, rec in enumerate(csv.reader(lines)):
        if not rec:
            continue
        if k == 0:
            if [c.strip().casefold() for c in rec] != ["vi", "vo", "tol"]:
                raise ValueError(f"{path}: expected header 'vi,vo,tol'")
            continue
        rows.append(ReferenceRow(float(rec[0]), float(rec[1]), float(rec[2])))
    return ReferenceTable(tuple(rows), provenance or "bundled reference expectations")


def sample_rpm_map() -> RpmVoltageMap:
    return RpmVoltageMap.from_csv(corpus_dir() / "rpm_map.sample.csv")
