"""Point cloud loading, filtering, and spatial queries.

Clouds are immutable after construction; positions are millimeters.  The
spatial index wraps a balanced k-d tree but always re-checks candidates with
exact numpy arithmetic, so query results coincide with a brute-force linear
scan including boundary ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import CloudParseError, DomainError


@dataclass(frozen=True)
class PointCloud:
    """Positions [mm] with optional colors (0..255) and target masses."""

    positions: np.ndarray
    colors: np.ndarray | None = None
    target: np.ndarray | None = None

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) < 1:
            raise DomainError("positions must be a non-empty (n, 3) array")
        if not np.all(np.isfinite(pos)):
            raise DomainError("positions contain non-finite values")
        object.__setattr__(self, "positions", pos)
        pos.setflags(write=False)
        if self.colors is not None:
            col = np.asarray(self.colors, dtype=float)
            if col.shape != (len(pos), 3):
                raise DomainError("colors must match positions in length")
            object.__setattr__(self, "colors", col)
            col.setflags(write=False)
        if self.target is not None:
            tgt = np.asarray(self.target, dtype=float)
            if tgt.shape != (len(pos),):
                raise DomainError("target must match positions in length")
            if np.any(tgt < 0) or not np.all(np.isfinite(tgt)):
                raise DomainError("target masses must be finite and >= 0")
            if tgt.sum() <= 0:
                raise DomainError("target masses must not all vanish")
            object.__setattr__(self, "target", tgt)
            tgt.setflags(write=False)

    @property
    def count(self) -> int:
        return len(self.positions)


class SpatialIndex:
    """Balanced k-d tree over cloud positions with exact re-checked queries."""

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self._tree = cKDTree(cloud.positions, balanced_tree=True)

    def radius_neighbors(self, center, r: float) -> np.ndarray:
        """Indices with ||x_i - center|| <= r, ascending index order."""
        if r <= 0:
            raise DomainError("radius must be positive")
        center = np.asarray(center, dtype=float)
        cand = self._tree.query_ball_point(center, r * (1.0 + 1e-12) + 1e-12)
        cand = np.asarray(sorted(cand), dtype=int)
        if len(cand) == 0:
            return cand
        d2 = np.einsum(
            "ij,ij->i", self.cloud.positions[cand] - center, self.cloud.positions[cand] - center
        )
        return cand[np.sqrt(d2) <= r]

    def knn(self, center, k: int) -> np.ndarray:
        """The k nearest indices, distance-ascending, ties to the lower index."""
        n = self.cloud.count
        if not 1 <= k <= n:
            raise DomainError(f"k must be in [1, {n}], got {k}")
        center = np.asarray(center, dtype=float)
        kq = min(n, k + 1)
        d, _ = self._tree.query(center, k=kq)
        d = np.atleast_1d(d)
        # collect every point not farther than the k-th candidate, then
        # re-rank exactly so boundary ties resolve by index
        cutoff = d[min(k, kq) - 1] * (1.0 + 1e-12) + 1e-12
        cand = np.asarray(self._tree.query_ball_point(center, cutoff), dtype=int)
        diff = self.cloud.positions[cand] - center
        d2 = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((cand, d2))
        return cand[order][:k]


def mean_spacing(cloud: PointCloud) -> float:
    """Mean distance to the nearest neighbor, the resolution scale h."""
    if cloud.count < 2:
        raise DomainError("mean spacing needs at least 2 points")
    tree = cKDTree(cloud.positions)
    d, _ = tree.query(cloud.positions, k=2)
    return float(np.mean(d[:, 1]))


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """One centroid per occupied voxel; target masses sum, colors average."""
    if voxel <= 0:
        raise DomainError("voxel size must be positive")
    keys = np.floor(cloud.positions / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    ncells = len(counts)

    def bucket_mean(values):
        acc = np.zeros((ncells,) + values.shape[1:])
        np.add.at(acc, inverse, values)
        return acc / counts.reshape(-1, *([1] * (values.ndim - 1)))

    positions = bucket_mean(cloud.positions)
    colors = bucket_mean(cloud.colors) if cloud.colors is not None else None
    target = None
    if cloud.target is not None:
        target = np.zeros(ncells)
        np.add.at(target, inverse, cloud.target)
    return PointCloud(positions=positions, colors=colors, target=target)


def _parse_csv(path: Path) -> PointCloud:
    positions, colors, targets = [], [], []
    layout = None  # columns beyond xyz: "", "p", "rgb", "rgbp"
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            try:
                values = [float(f) for f in fields]
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise CloudParseError("non-numeric field", path=path, line=lineno)
            ncol = len(values)
            if ncol not in (3, 4, 6, 7):
                raise CloudParseError(
                    f"expected 3, 4, 6 or 7 columns, got {ncol}", path=path, line=lineno
                )
            this_layout = {3: "", 4: "p", 6: "rgb", 7: "rgbp"}[ncol]
            if layout is None:
                layout = this_layout
            elif layout != this_layout:
                raise CloudParseError("inconsistent column count", path=path, line=lineno)
            positions.append(values[:3])
            if "rgb" in layout:
                colors.append(values[3:6])
            if "p" in layout:
                targets.append(values[-1])
    if not positions:
        raise DomainError(f"{path}: no points found")
    return PointCloud(
        positions=np.array(positions),
        colors=np.array(colors) if colors else None,
        target=np.array(targets) if targets else None,
    )


def _parse_ply(path: Path) -> PointCloud:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudParseError("missing 'ply' magic", path=path, line=1)
    n_vertex = None
    props = []
    data_start = None
    in_vertex_element = False
    for i, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise CloudParseError("only ascii format supported", path=path, line=i)
        elif tok[0] == "element":
            in_vertex_element = tok[1] == "vertex"
            if in_vertex_element:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex_element:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            data_start = i
            break
    if n_vertex is None or data_start is None:
        raise CloudParseError("incomplete header", path=path, line=1)
    for name in ("x", "y", "z"):
        if name not in props:
            raise CloudParseError(f"vertex property '{name}' missing", path=path, line=1)
    has_color = all(c in props for c in ("red", "green", "blue"))
    idx = {name: j for j, name in enumerate(props)}

    positions = np.empty((n_vertex, 3))
    colors = np.empty((n_vertex, 3)) if has_color else None
    for row in range(n_vertex):
        lineno = data_start + 1 + row
        if lineno > len(lines):
            raise CloudParseError("unexpected end of file", path=path, line=len(lines))
        fields = lines[lineno - 1].split()
        if len(fields) < len(props):
            raise CloudParseError("short vertex row", path=path, line=lineno)
        try:
            positions[row] = [float(fields[idx[c]]) for c in ("x", "y", "z")]
            if has_color:
                colors[row] = [float(fields[idx[c]]) for c in ("red", "green", "blue")]
        except ValueError:
            raise CloudParseError("non-numeric vertex field", path=path, line=lineno)
    if n_vertex == 0:
        raise DomainError(f"{path}: no points found")
    return PointCloud(positions=positions, colors=colors)


def load_cloud(path, format: str | None = None) -> PointCloud:
    """Load a cloud from a CSV (x,y,z[,r,g,b][,p]) or ASCII PLY file."""
    path = Path(path)
    if format is None:
        format = "ply-ascii" if path.suffix.lower() == ".ply" else "csv"
    if format == "csv":
        return _parse_csv(path)
    if format == "ply-ascii":
        return _parse_ply(path)
    raise DomainError(f"unknown cloud format: {format!r}")


def save_cloud_csv(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(cloud.count):
            row = [f"{v!r}" for v in cloud.positions[i]]
            if cloud.colors is not None:
                row += [f"{v!r}" for v in cloud.colors[i]]
            if cloud.target is not None:
                row.append(f"{cloud.target[i]!r}")
            fh.write(",".join(row) + "\n")
