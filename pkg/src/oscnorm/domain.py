"""Intervals, node grids and the numeric configuration shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Literal

import numpy as np

ClusterEnd = Literal["left", "right", "none"]

# e**-700 is still a normal double; keeps log grids away from underflow.
_MAX_T = 700.0


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"interval endpoints must be finite, got ({lo}, {hi})")
        if not lo < hi:
            raise ValueError(f"interval needs lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]


def make_interval(lo: float, hi: float) -> Interval:
    return Interval(lo, hi)


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing node set.

    ``cluster_end`` names the endpoint the nodes accumulate toward; it fixes the
    coordinate in which :func:`refine` takes midpoints (``-log x`` for ``left``).
    """

    nodes: np.ndarray
    cluster_end: ClusterEnd = "none"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        if self.cluster_end not in ("left", "right", "none"):
            raise ValueError(f"unknown cluster_end {self.cluster_end!r}")
        if self.cluster_end == "left" and nodes[0] <= 0:
            raise ValueError("left-clustered grids need positive nodes")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.cluster_end == other.cluster_end and np.array_equal(self.nodes, other.nodes)

    __hash__ = None


def uniform_grid(interval: Interval, m: int) -> Grid:
    if m < 2:
        raise ValueError("uniform grid needs m >= 2")
    return Grid(np.linspace(interval.lo, interval.hi, m), "none")


def log_grid(interval: Interval, m: int, cluster_end: ClusterEnd = "left", t_max: float = 40.0) -> Grid:
    """Grid of ``m`` nodes, geometric toward ``cluster_end``.

    With ``cluster_end='left'`` the nodes are ``exp(-t)`` for ``t`` equally spaced
    between the cutoff and ``-log(hi)``.  When ``lo == 0`` the cutoff is ``t_max``;
    if ``t_max`` does not clear ``-log(hi)`` by at least one unit the cutoff moves to
    ``-log(hi) + 40`` so tiny intervals such as ``(0, e^{-e^6})`` keep a usable range.
    ``right`` mirrors this about ``hi``; ``none`` is uniform.
    """
    if m < 3:
        raise ValueError(f"grid needs m >= 3 nodes, got {m}")
    if cluster_end == "none":
        return uniform_grid(interval, m)
    if cluster_end == "left":
        if interval.lo < 0:
            raise ValueError("left clustering needs lo >= 0")
        t_lo = -math.log(interval.hi)
        t_hi = _cutoff(interval.lo, t_lo, t_max)
        t = np.linspace(t_hi, t_lo, m)
        nodes = np.exp(-t)
        nodes[-1] = interval.hi
        if interval.lo > 0:
            nodes[0] = interval.lo
        return Grid(nodes, "left")
    if cluster_end == "right":
        width = interval.length
        t_lo = -math.log(width)
        t_hi = t_lo + t_max
        t = np.linspace(t_lo, t_hi, m)
        nodes = interval.hi - np.exp(-t)
        nodes[0] = interval.lo
        return Grid(nodes, "right")
    raise ValueError(f"unknown cluster_end {cluster_end!r}")


def _cutoff(lo: float, t_lo: float, t_max: float) -> float:
    if lo > 0:
        return -math.log(lo)
    t_hi = t_max if t_max >= t_lo + 1.0 else t_lo + 40.0
    return min(t_hi, _MAX_T)


def refine(grid: Grid) -> Grid:
    """Insert the midpoint of every cell, measured in the clustering coordinate."""
    x = grid.nodes
    if grid.cluster_end == "left":
        mids = np.exp(0.5 * (np.log(x[:-1]) + np.log(x[1:])))  # no underflow of the product
    elif grid.cluster_end == "right":
        gaps = grid.hi - x
        mids = np.empty(x.size - 1)
        mids[:-1] = grid.hi - np.sqrt(gaps[:-2] * gaps[1:-1])
        mids[-1] = 0.5 * (x[-2] + x[-1])
    else:
        mids = 0.5 * (x[:-1] + x[1:])
    out = np.empty(2 * x.size - 1)
    out[0::2] = x
    out[1::2] = mids
    return Grid(out, grid.cluster_end)


def with_points(grid: Grid, points) -> Grid:
    """Merge extra nodes (e.g. jump locations) that fall strictly inside the grid span."""
    pts = np.asarray(list(points), dtype=float)
    if pts.size == 0:
        return grid
    pts = pts[(pts > grid.lo) & (pts < grid.hi)]
    merged = np.unique(np.concatenate([grid.nodes, pts]))
    return Grid(merged, grid.cluster_end)


@dataclass(frozen=True)
class NumericConfig:
    grid_size: int = 512
    quad_rel_tol: float = 1e-9
    refine_levels: int = 3
    stability_ratio: float = 0.02
    a1_cap: float = 1e6
    jn_c1: float = math.e
    jn_c2: float = 1.0 / (2.0 * math.e)
    t_max: float = 40.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")
        if self.grid_size < 16:
            raise ValueError("grid_size must be at least 16")
        if not self.stability_ratio < 1:
            raise ValueError("stability_ratio must be < 1")

    def with_overrides(self, **kwargs) -> "NumericConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)

    @classmethod
    def from_text(cls, text: str) -> "NumericConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            values[key] = int(value) if types[key] in (int, "int") else float(value)
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path) -> "NumericConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))
