"""Point cloud container and ASCII PLY serialization.

PLY files carry x,y,z and optionally nx,ny,nz as float64 formatted with
%.17g, so a save/load round trip reproduces the arrays bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

_NORMAL_TOL = 1e-6


@dataclass(frozen=True)
class PointCloud:
    """N 3D points in meters, with optional unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.ascontiguousarray(self.normals, dtype=float).reshape(-1, 3)
            if nrm.shape[0] != pts.shape[0]:
                raise ValueError("normals must match points one-to-one")
            lens = np.linalg.norm(nrm, axis=1)
            if nrm.shape[0] and np.max(np.abs(lens - 1.0)) > _NORMAL_TOL:
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, t) -> "PointCloud":
        """Apply a rigid transform; normals rotate only."""
        pts = t.apply(self.points) if len(self) else self.points
        nrm = None
        if self.normals is not None:
            nrm = self.normals @ t.rotation.T if len(self) else self.normals
        return PointCloud(pts, nrm)

    def select(self, mask_or_idx: np.ndarray) -> "PointCloud":
        nrm = self.normals[mask_or_idx] if self.normals is not None else None
        return PointCloud(self.points[mask_or_idx], nrm)


def save_ply(cloud: PointCloud, path: str | Path) -> None:
    """Write an ASCII PLY with x,y,z and, when present, nx,ny,nz."""
    path = Path(path)
    has_normals = cloud.normals is not None
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if has_normals:
        lines += ["property double nx", "property double ny", "property double nz"]
    lines.append("end_header")
    data = cloud.points if not has_normals else np.hstack([cloud.points, cloud.normals])
    body = "\n".join(" ".join("%.17g" % v for v in row) for row in data)
    text = "\n".join(lines)
    if len(cloud):
        text += "\n" + body
    path.write_text(text + "\n")


def load_ply(path: str | Path) -> PointCloud:
    """Read an ASCII PLY written by :func:`save_ply` (or compatible)."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vertex = 0
    props: list[str] = []
    i = 1
    while i < len(lines):
        tok = lines[i].split()
        if tok and tok[0] == "element" and tok[1] == "vertex":
            n_vertex = int(tok[2])
        elif tok and tok[0] == "property":
            props.append(tok[2])
        elif tok and tok[0] == "format" and tok[1] != "ascii":
            raise ValueError(f"{path}: only ascii PLY is supported")
        elif tok and tok[0] == "end_header":
            i += 1
            break
        i += 1
    want = ["x", "y", "z"]
    has_normals = props[:6] == ["x", "y", "z", "nx", "ny", "nz"]
    if props[:3] != want:
        raise ValueError(f"{path}: expected x,y,z leading properties, got {props}")
    width = 6 if has_normals else 3
    if n_vertex == 0:
        data = np.zeros((0, width))
    else:
        data = np.loadtxt(lines[i : i + n_vertex], dtype=float, ndmin=2)[:, :width]
    if data.shape[0] != n_vertex:
        raise ValueError(f"{path}: header promised {n_vertex} vertices, found {data.shape[0]}")
    normals = data[:, 3:6] if has_normals else None
    return PointCloud(data[:, :3], normals)
