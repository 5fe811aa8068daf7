"""Atomic file writes and the provenance stamp carried by every artifact."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import pyarrow as pa
import pyarrow.parquet as pq

from . import __version__


def config_hash(config) -> str:
    payload = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def provenance(seed=None, config=None) -> dict[str, str]:
    return {"seed": str(seed), "config": config_hash(config or {}), "version": __version__}


def header_line(prov: dict[str, str] | None) -> str:
    if not prov:
        return ""
    return "# " + " ".join(f"{k}={v}" for k, v in prov.items()) + "\n"


def _tmp_for(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    return Path(tmp)


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    tmp = _tmp_for(path)
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)
    return path


def atomic_write_csv(path, frame, prov=None, float_format="%.10g") -> Path:
    body = frame.to_csv(index=False, float_format=float_format, lineterminator="\n")
    return atomic_write_text(path, header_line(prov) + body)


def atomic_write_parquet(path, frame, prov=None) -> Path:
    path = Path(path)
    table = pa.Table.from_pandas(frame, preserve_index=False)
    if prov:
        meta = dict(table.schema.metadata or {})
        meta.update({f"energy_fs.{k}".encode(): str(v).encode() for k, v in prov.items()})
        table = table.replace_schema_metadata(meta)
    tmp = _tmp_for(path)
    try:
        pq.write_table(table, tmp)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)
    return path
