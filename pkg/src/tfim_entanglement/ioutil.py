"""File formats shared by the pipeline stages.

CSV files: a first ``#`` line carrying ``schema_version`` and ``config_hash``,
then a header row; comma separated, LF line endings, floats written with 17
significant digits, missing values as empty fields. JSON files: sorted keys,
two-space indent, trailing newline, always with ``schema_version`` and
``config_hash`` keys.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

SCHEMA_VERSION = 1

logger = logging.getLogger("tfim_entanglement")


def log_event(event: str, level: int = logging.INFO, **fields: Any) -> None:
    logger.log(level, json.dumps({"event": event, **fields}, sort_keys=True, default=str))


def stable_hash(obj: Any, length: int = 16) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:length]


def format_value(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.17g}"
    return str(x)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              config_hash: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION} config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(x) for x in row])
    tmp.replace(path)


def read_csv(path: str | Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Return (metadata, rows) with every value left as a string."""
    with open(path, newline="") as fh:
        first = fh.readline()
        meta = {}
        if first.startswith("#"):
            for item in first[1:].split():
                key, _, value = item.partition("=")
                meta[key] = value
        else:
            fh.seek(0)
        return meta, list(csv.DictReader(fh))


def parse_float(s: str) -> float | None:
    return None if s == "" else float(s)


def write_json(path: str | Path, payload: dict, config_hash: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, "config_hash": config_hash, **payload}
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
    tmp.replace(path)


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
