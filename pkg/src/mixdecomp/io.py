"""Text file formats for kernels and partitions, plus JSON report helpers.

Kernel format: first non-comment line is the state count n, followed either
by n dense rows of n probabilities or by sparse `i j p` triples (0-indexed)
whose missing row mass is assigned to the diagonal.  Comment lines start
with '#'; lines of the form `# label: NAME` attach state labels in order.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .decomposition import Partition
from .kernel import StochasticKernel


def load_kernel(path: str | Path) -> StochasticKernel:
    labels: list[str] = []
    data_lines: list[str] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("label:"):
                labels.append(body.split(":", 1)[1].strip())
            continue
        data_lines.append(line)
    if not data_lines:
        raise ValueError(f"{path}: no data lines")
    n = int(data_lines[0].split()[0])
    rows = data_lines[1:]
    dense = None
    if len(rows) == n and all(len(r.split()) == n for r in rows):
        cand = np.array([[float(v) for v in r.split()] for r in rows])
        if np.all(np.abs(cand.sum(axis=1) - 1.0) <= 1e-6):
            dense = cand
    if dense is None:
        mat = np.zeros((n, n))
        for r in rows:
            parts = r.split()
            if len(parts) != 3:
                raise ValueError(f"{path}: expected 'i j p' triple, got {r!r}")
            i, j, p = int(parts[0]), int(parts[1]), float(parts[2])
            mat[i, j] += p
        np.fill_diagonal(mat, np.diag(mat) + 1.0 - mat.sum(axis=1))
        dense = mat
    return StochasticKernel(dense, tuple(labels) if len(labels) == n else None)


def save_kernel(kernel: StochasticKernel, path: str | Path) -> None:
    lines = []
    if kernel.labels:
        lines.extend(f"# label: {s}" for s in kernel.labels)
    lines.append(str(kernel.n_states))
    for row in kernel.rows:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def load_partition(path: str | Path, n_states: int | None = None) -> Partition:
    pairs = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        s, b = line.split()[:2]
        pairs.append((int(s), int(b)))
    if not pairs:
        raise ValueError(f"{path}: empty partition file")
    size = n_states if n_states is not None else max(s for s, _ in pairs) + 1
    block_of = np.full(size, -1, dtype=int)
    for s, b in pairs:
        block_of[s] = b
    if (block_of < 0).any():
        missing = np.nonzero(block_of < 0)[0]
        raise ValueError(f"{path}: states without a block: {missing[:8].tolist()}")
    return Partition.from_block_of(block_of)


def save_partition(partition: Partition, path: str | Path) -> None:
    lines = [f"{s} {b}" for s, b in enumerate(partition.block_of)]
    _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path: str | Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode())


def _atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=False, default=_js) + "\n")


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _js(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")
