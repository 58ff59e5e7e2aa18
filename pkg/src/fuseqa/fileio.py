"""File formats shared by the CLI: atomic writes, matrix CSV, JSONL, canonical JSON."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def matrix_to_csv(values, sample_ids=None, fmt=repr) -> str:
    """Matrix as CSV with header ``sample_id,c0..c{N-1}``."""
    m = np.atleast_2d(np.asarray(values))
    ids = range(m.shape[0]) if sample_ids is None else sample_ids
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id"] + [f"c{j}" for j in range(m.shape[1])])
    for sid, row in zip(ids, m):
        w.writerow([sid] + [fmt(v.item()) for v in row])
    return buf.getvalue()


def write_matrix_csv(path, values, sample_ids=None) -> None:
    atomic_write_text(path, matrix_to_csv(values, sample_ids))


def read_matrix_csv(path, dtype=float) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "sample_id":
        raise ValueError(f"{path}: expected a header starting with 'sample_id'")
    width = len(rows[0]) - 1
    ids = [r[0] for r in rows[1:]]
    body = [r[1:] for r in rows[1:]]
    if any(len(r) != width for r in body):
        raise ValueError(f"{path}: ragged rows")
    return ids, np.asarray(body, dtype=float).astype(dtype).reshape(len(ids), width)


def write_jsonl(path, records) -> None:
    lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
