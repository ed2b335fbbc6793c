"""``traj.csv``: header ``t,x,y,z,yaw,v`` (optionally ``,status``), one row per
sample, 9 significant digits, LF line endings."""
from __future__ import annotations

import math

import numpy as np

from .errors import FormatError
from .geometry import wrap_angles
from .trajectory import Trajectory

COLUMNS = ("t", "x", "y", "z", "yaw", "v")


def _g(v: float) -> str:
    return f"{float(v):.9g}"


def format_traj_csv(traj: Trajectory, status=None) -> str:
    header = list(COLUMNS) + (["status"] if status is not None else [])
    lines = [",".join(header)]
    for k in range(len(traj)):
        row = [_g(traj.t[k]), *map(_g, traj.pos[k]), _g(traj.yaw[k]), _g(traj.speed[k])]
        if status is not None:
            row.append(str(status[k]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_traj_csv(path, traj: Trajectory, status=None) -> None:
    if status is not None and len(status) != len(traj):
        raise ValueError("status must have one entry per sample")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_traj_csv(traj, status))


def read_traj_csv(path) -> tuple[Trajectory, list[str] | None]:
    """Parse a traj.csv file; returns ``(trajectory, status or None)``.

    Raises :class:`FormatError` naming the 1-based line of the first problem.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise FormatError(path, 0, f"not UTF-8: {exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError(path, 1, "empty file")
    header = lines[0].rstrip("\r").split(",")
    with_status = header == list(COLUMNS) + ["status"]
    if header != list(COLUMNS) and not with_status:
        raise FormatError(path, 1, f"expected header {','.join(COLUMNS)}[,status], got {lines[0]!r}")
    ncol = len(header)
    rows, status = [], []
    for i, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        if not line.strip():
            raise FormatError(path, i, "blank line")
        cells = line.split(",")
        if len(cells) != ncol:
            raise FormatError(path, i, f"expected {ncol} fields, got {len(cells)}")
        try:
            vals = [float(c) for c in cells[:6]]
        except ValueError:
            raise FormatError(path, i, f"non-numeric field in {line!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise FormatError(path, i, "non-finite value")
        if rows and not vals[0] > rows[-1][0]:
            raise FormatError(path, i, "timestamps must be strictly increasing")
        rows.append(vals)
        if with_status:
            status.append(cells[6].strip())
    if not rows:
        raise FormatError(path, 2, "no samples")
    a = np.array(rows)
    traj = Trajectory(a[:, 0], a[:, 1:4].copy(), wrap_angles(a[:, 4]), a[:, 5].copy())
    return traj, (status if with_status else None)
