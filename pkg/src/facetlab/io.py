"""File formats: CSV tables, P5 masks, raw float grids and key=value configs.

Float grid layout: a 64-byte ASCII header
``FLGRID1 <d> <lo_1> ... <lo_d> <hi_1> ... <hi_d>`` padded with spaces and
ending in a newline, followed by the values as little-endian float64 in
C order over the box.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError
from .lattice import LatticeBox, ScalarField, boundary_masks

GRID_MAGIC = "FLGRID1"
HEADER_BYTES = 64


def fmt(value) -> str:
    """CSV cell text; floats get 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(c) for c in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    Path(path).write_text(csv_text(header, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


# ----------------------------------------------------------------- float grid


def write_grid(path, u: ScalarField) -> None:
    box = u.box
    head = " ".join([GRID_MAGIC, str(box.d), *map(str, box.lo), *map(str, box.hi)])
    if len(head) > HEADER_BYTES - 1:
        raise UsageError("box coordinates do not fit in the grid header")
    with open(path, "wb") as fh:
        fh.write(head.ljust(HEADER_BYTES - 1).encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_grid(path) -> ScalarField:
    raw = Path(path).read_bytes()
    parts = raw[:HEADER_BYTES].decode("ascii").split()
    if not parts or parts[0] != GRID_MAGIC:
        raise UsageError(f"{path} is not a float grid")
    d = int(parts[1])
    lo, hi = tuple(map(int, parts[2:2 + d])), tuple(map(int, parts[2 + d:2 + 2 * d]))
    box = LatticeBox(lo, hi)
    vals = np.frombuffer(raw[HEADER_BYTES:], dtype="<f8")
    if vals.size != box.size:
        raise UsageError(f"{path}: expected {box.size} values, found {vals.size}")
    return ScalarField(box, vals.reshape(box.shape).astype(np.float64))


# ------------------------------------------------------------------------ PGM

SUPPORT, BOUNDARY, EXTERIOR = 128, 0, 255


def support_image(u: ScalarField) -> np.ndarray:
    """2-d byte image: outer boundary of ``{u > 0}`` is 0, support 128, the rest 255.

    One-dimensional fields give a single row; for ``d >= 3`` the slice
    through the middle of the trailing axes is taken.
    """
    supp = u.values > 0
    outer, _ = boundary_masks(supp)
    img = np.full(supp.shape, EXTERIOR, dtype=np.uint8)
    img[supp] = SUPPORT
    img[outer] = BOUNDARY
    if img.ndim == 1:
        return img[None, :]
    while img.ndim > 2:
        img = img[..., img.shape[-1] // 2]
    return img


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise UsageError(f"{path} is not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w).copy()


# --------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    """A flat parameter record that round-trips through ``key=value`` text.

    Values are stored as JSON literals, so floats survive exactly.  Any key
    naming a tolerance (``tol``, ``eps``) must be positive.
    """

    command: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.params.items():
            if ("tol" in k or "eps" in k) and v is not None and not (isinstance(v, (int, float)) and v > 0):
                raise UsageError(f"{k} must be positive, got {v!r}")

    def to_text(self) -> str:
        lines = [f"command={json.dumps(self.command)}"]
        for k in sorted(self.params):
            v = self.params[k]
            if isinstance(v, float) and not math.isfinite(v):
                raise UsageError(f"{k} is not finite")
            lines.append(f"{k}={json.dumps(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        params, command = {}, None
        for n, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"config line {n}: expected key=value")
            k, v = line.split("=", 1)
            k = k.strip()
            try:
                val = json.loads(v)
            except json.JSONDecodeError:
                val = v.strip()
            if k == "command":
                command = val
            else:
                params[k] = val
        return cls(command or "", params)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())
