"""
Checkpoint container: named matrices plus named JSON metadata in one text file.

    TAILAUG-CKPT 1
    matrix <name> <rows> <cols>
    <cols values>            (one line per row, shortest round-trip floats)
    meta <name>
    <one line of JSON>
    end <number of entries>

Entries are written sorted by kind then name, so equal contents always give
equal bytes. Arrays of other ranks are stored as 2-D matrices with their
original shape kept in the "shapes" metadata entry.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .corpus import format_float
from .errors import CheckpointError, IncompatibleCheckpointError, StateError

logger = logging.getLogger(__name__)

MAGIC = "TAILAUG-CKPT"
FORMAT_VERSION = 1
SHAPES_KEY = "shapes"

PathLike = Union[str, Path]


class Checkpoint:
    """In-memory checkpoint contents."""

    def __init__(self, matrices: Optional[Dict[str, np.ndarray]] = None, meta: Optional[Dict[str, Any]] = None):
        self.matrices: Dict[str, np.ndarray] = {}
        self.meta: Dict[str, Any] = dict(meta or {})
        for name, value in (matrices or {}).items():
            self.set_matrix(name, value)

    def __contains__(self, name: str) -> bool:
        return name in self.matrices or name in self.meta

    def set_matrix(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise CheckpointError(f"matrix {name!r} must be 2-D, got shape {value.shape}")
        self._check_name(name)
        self.matrices[name] = value.copy()

    def matrix(self, name: str) -> np.ndarray:
        if name not in self.matrices:
            raise StateError(f"checkpoint has no matrix {name!r}")
        return self.matrices[name]

    def set_array(self, name: str, value: np.ndarray) -> None:
        """Store an array of any rank; non-2-D arrays are flattened to (first dim, rest)."""
        value = np.asarray(value, dtype=np.float64)
        shapes = dict(self.meta.get(SHAPES_KEY, {}))
        if value.ndim == 2:
            shapes.pop(name, None)
            self.set_matrix(name, value)
        else:
            shapes[name] = list(value.shape)
            rows = value.shape[0] if value.ndim else 1
            self.set_matrix(name, value.reshape(rows, -1) if value.size else value.reshape(rows, 0))
        if shapes:
            self.meta[SHAPES_KEY] = shapes
        else:
            self.meta.pop(SHAPES_KEY, None)

    def array(self, name: str) -> np.ndarray:
        shape = self.meta.get(SHAPES_KEY, {}).get(name)
        value = self.matrix(name)
        return value.reshape(shape) if shape is not None else value

    def set_meta(self, name: str, value: Any) -> None:
        self._check_name(name)
        self.meta[name] = json.loads(json.dumps(value, sort_keys=True))

    def get_meta(self, name: str, default: Any = None) -> Any:
        return self.meta.get(name, default)

    def require_meta(self, name: str) -> Any:
        if name not in self.meta:
            raise StateError(f"checkpoint has no metadata {name!r}")
        return self.meta[name]

    def drop(self, *names: str) -> None:
        """Remove entries (and their stored shapes) if present."""
        shapes = dict(self.meta.get(SHAPES_KEY, {}))
        for name in names:
            self.matrices.pop(name, None)
            self.meta.pop(name, None)
            shapes.pop(name, None)
        if shapes:
            self.meta[SHAPES_KEY] = shapes
        else:
            self.meta.pop(SHAPES_KEY, None)

    @staticmethod
    def _check_name(name: str) -> None:
        if not name or "\n" in name or name != name.strip():
            raise CheckpointError(f"invalid entry name {name!r}")


def dumps(ckpt: Checkpoint) -> str:
    lines = [f"{MAGIC} {FORMAT_VERSION}"]
    for name in sorted(ckpt.matrices):
        value = ckpt.matrices[name]
        rows, cols = value.shape
        lines.append(f"matrix {name} {rows} {cols}")
        for row in value:
            lines.append(" ".join(format_float(x) for x in row))
    for name in sorted(ckpt.meta):
        lines.append(f"meta {name}")
        lines.append(json.dumps(ckpt.meta[name], sort_keys=True))
    lines.append(f"end {len(ckpt.matrices) + len(ckpt.meta)}")
    return "\n".join(lines) + "\n"


def loads(text: str, source: str = "<checkpoint>") -> Checkpoint:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CheckpointError(f"{source}: empty checkpoint")

    header = lines[0].split(" ")
    if len(header) != 2 or header[0] != MAGIC:
        raise CheckpointError(f"{source}: unrecognised checkpoint header {lines[0]!r}")
    if header[1] != str(FORMAT_VERSION):
        raise IncompatibleCheckpointError(
            f"{source}: checkpoint format version {header[1]!r} is not supported (expected {FORMAT_VERSION})"
        )

    ckpt = Checkpoint()
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("end "):
            entries = len(ckpt.matrices) + len(ckpt.meta)
            if line != f"end {entries}" or i != len(lines) - 1:
                raise CheckpointError(f"{source}:{i + 1}: trailer {line!r} does not close {entries} entries")
            return ckpt
        if line.startswith("matrix "):
            parts = line[len("matrix "):].rsplit(" ", 2)
            try:
                name, rows, cols = parts[0], int(parts[1]), int(parts[2])
            except (IndexError, ValueError):
                raise CheckpointError(f"{source}:{i + 1}: malformed matrix header {line!r}") from None
            if i + rows > len(lines) - 1:
                raise CheckpointError(f"{source}: truncated matrix {name!r} (expected {rows} rows)")
            value = np.empty((rows, cols), dtype=np.float64)
            for r in range(rows):
                tokens = lines[i + 1 + r].split(" ") if cols else []
                if len(tokens) != cols:
                    raise CheckpointError(
                        f"{source}:{i + 2 + r}: matrix {name!r} row {r} has {len(tokens)} values, expected {cols}"
                    )
                try:
                    value[r] = [float(tok) for tok in tokens]
                except ValueError:
                    raise CheckpointError(f"{source}:{i + 2 + r}: non-numeric value in matrix {name!r}") from None
            ckpt.matrices[name] = value
            i += 1 + rows
        elif line.startswith("meta "):
            name = line[len("meta "):]
            if i + 1 >= len(lines):
                raise CheckpointError(f"{source}: truncated metadata {name!r}")
            try:
                ckpt.meta[name] = json.loads(lines[i + 1])
            except json.JSONDecodeError as e:
                raise CheckpointError(f"{source}:{i + 2}: bad metadata {name!r}: {e}") from None
            i += 2
        else:
            raise CheckpointError(f"{source}:{i + 1}: unexpected line {line[:40]!r}")
    raise CheckpointError(f"{source}: truncated checkpoint (missing end trailer)")


def save(path: PathLike, ckpt: Checkpoint) -> None:
    """Write the checkpoint, replacing any existing file only once fully written."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(ckpt))
    os.replace(tmp, path)
    logger.info("Saved checkpoint (%d matrices, %d metadata entries) to %s",
                len(ckpt.matrices), len(ckpt.meta), path)


def load(path: PathLike) -> Checkpoint:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            text = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    if text and not text.endswith("\n"):
        raise CheckpointError(f"{path}: truncated checkpoint (no final newline)")
    ckpt = loads(text, source=str(path))
    logger.info("Loaded checkpoint with %d matrices from %s", len(ckpt.matrices), path)
    return ckpt
