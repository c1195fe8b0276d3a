"""Market files and report serialization.

A market file is a JSON object with ``delta``, ``C`` and optionally the
pre-normalization ``c_raw`` and ``supplies``.  Floats are written with
Python's shortest round-trip representation, so parse/serialize is lossless.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .market import Market

SCHEMA_VERSION = 1


def _plain(obj: Any) -> Any:
    """Recursively convert numpy containers and scalars into JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable and reversible
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_plain(report), indent=2, allow_nan=False)


def market_to_dict(m: Market, c_raw=None, supplies=None) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "kind": "market", "delta": m.delta, "C": m.C}
    if c_raw is not None:
        out["c_raw"] = np.asarray(c_raw)
    if supplies is not None:
        out["supplies"] = np.asarray(supplies)
    return _plain(out)


def market_from_dict(d: dict) -> Market:
    """Build a Market from a parsed market file (``C`` is used as given)."""
    if not isinstance(d, dict) or "C" not in d or "delta" not in d:
        raise ValueError("market file needs 'delta' and 'C'")
    return Market(np.asarray(d["C"], dtype=float), float(d["delta"]))


def read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_text(path: str | Path | None, text: str) -> None:
    text = text if text.endswith("\n") else text + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def to_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()
