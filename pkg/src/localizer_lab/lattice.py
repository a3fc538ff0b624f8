"""Finite windows of discrete point patterns with deterministic site order.

Everything downstream (matrix layouts, Pfaffian signs, disorder streams) keys
off the site ordering, so patterns sort their sites lexicographically on
coordinates and subsets always inherit the parent order.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Pattern",
    "Region",
    "build_cubic_window",
    "sites_in_ball",
    "load_pattern_csv",
    "check_offset",
    "OffsetError",
]

# Offsets closer than this to any lattice coordinate plane are rejected: the
# position operator minus the offset must stay uniformly invertible.
OFFSET_GUARD = 0.1

# Hard cap on generated window sizes; protects against absurd configs.
DEFAULT_MAX_SITES = 4_000_000


class OffsetError(ValueError):
    pass


@dataclass(frozen=True)
class Pattern:
    """Ordered finite point set in R^d (integer coordinates for cubic windows)."""

    d: int
    sites: np.ndarray  # (N, d) float, lexicographically sorted
    min_distance: float = 1.0
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float)
        if sites.ndim != 2 or sites.shape[1] != self.d:
            raise ValueError("sites must be an (N, d) array")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(
            self, "_index", {tuple(s): i for i, s in enumerate(sites)}
        )
        if len(self._index) != len(sites):
            raise ValueError("sites are not pairwise distinct")

    def __len__(self):
        return len(self.sites)

    def index_of(self, site):
        return self._index[tuple(np.asarray(site, dtype=float))]

    def __contains__(self, site):
        return tuple(np.asarray(site, dtype=float)) in self._index

    def bounding_box(self):
        return self.sites.min(axis=0), self.sites.max(axis=0)

    def in_radius(self, center):
        """Distance from `center` to the edge of the bounding box, padded by
        half a lattice spacing (sites sit at integer coordinates, the window
        'owns' half a cell around each)."""
        lo, hi = self.bounding_box()
        c = np.asarray(center, dtype=float)
        pad = 0.5 * self.min_distance
        return float(np.min(np.minimum(c - (lo - pad), (hi + pad) - c)))

    def fingerprint(self):
        """Stable identity for reference-matching across localizer builds."""
        return (self.d, len(self.sites), hash(self.sites.tobytes()))


@dataclass(frozen=True)
class Region:
    """Membership predicate used for flattening windows, interface partitions
    and probe balls.  kind is one of 'ball', 'halfspace', 'explicit', 'all'."""

    kind: str
    center: tuple = None        # ball
    radius: float = None        # ball
    axis: int = None            # halfspace
    threshold: float = None     # halfspace: x[axis] >= threshold
    indices: tuple = None       # explicit site indices

    @staticmethod
    def ball(center, radius):
        return Region(kind="ball", center=tuple(np.asarray(center, float)), radius=float(radius))

    @staticmethod
    def halfspace(axis, threshold):
        return Region(kind="halfspace", axis=int(axis), threshold=float(threshold))

    @staticmethod
    def explicit(indices):
        return Region(kind="explicit", indices=tuple(int(i) for i in indices))

    @staticmethod
    def all():
        return Region(kind="all")

    def select(self, pattern):
        """Indices of pattern sites inside the region, in pattern order."""
        if self.kind == "all":
            return np.arange(len(pattern))
        if self.kind == "ball":
            dist = np.linalg.norm(pattern.sites - np.asarray(self.center), axis=1)
            return np.flatnonzero(dist <= self.radius + 1e-12)
        if self.kind == "halfspace":
            return np.flatnonzero(pattern.sites[:, self.axis] >= self.threshold)
        if self.kind == "explicit":
            return np.asarray(sorted(self.indices), dtype=int)
        raise ValueError(f"unknown region kind {self.kind!r}")

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "all":
            return np.ones(len(points), dtype=bool)
        if self.kind == "ball":
            return np.linalg.norm(points - np.asarray(self.center), axis=1) <= self.radius + 1e-12
        if self.kind == "halfspace":
            return points[:, self.axis] >= self.threshold
        raise ValueError(f"containment undefined for region kind {self.kind!r}")


def build_cubic_window(d, half_width, max_sites=DEFAULT_MAX_SITES):
    """Sites {-half_width..half_width}^d in lexicographic order."""
    d = int(d)
    half_width = int(half_width)
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if half_width < 1:
        raise ValueError("half_width must be >= 1")
    side = 2 * half_width + 1
    if side**d > max_sites:
        raise ValueError(
            f"window of {side}^{d} sites exceeds the budget of {max_sites}"
        )
    axes = [range(-half_width, half_width + 1)] * d
    sites = np.array(list(itertools.product(*axes)), dtype=float)
    return Pattern(d=d, sites=sites, min_distance=1.0)


def sites_in_ball(pattern, center, radius):
    """Indices of sites with |x - center| <= radius (plain Euclidean)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return Region.ball(center, radius).select(pattern)


def load_pattern_csv(path, d=None):
    """Explicit site-list loader: one row per site, d coordinate columns.

    Validates pairwise distinctness and records the minimal pairwise distance
    (uniform discreteness constant of the pattern).
    """
    raw = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    if d is not None and raw.shape[1] != d:
        raise ValueError(f"expected {d} coordinate columns, found {raw.shape[1]}")
    order = np.lexsort(raw.T[::-1])
    sites = raw[order]
    from scipy.spatial import cKDTree

    tree = cKDTree(sites)
    dist, _ = tree.query(sites, k=2)
    min_dist = float(dist[:, 1].min()) if len(sites) > 1 else 1.0
    if min_dist <= 0:
        raise ValueError("pattern contains duplicate sites")
    return Pattern(d=sites.shape[1], sites=sites, min_distance=min_dist)


def check_offset(pattern, z, guard=OFFSET_GUARD):
    """Enforce the offset guard: every coordinate of z must stay at distance
    >= guard from every coordinate value occurring in the pattern, so that
    sum_j (X_j - z_j)^2 is uniformly invertible."""
    z = np.asarray(z, dtype=float)
    if z.shape != (pattern.d,):
        raise OffsetError(f"offset must have {pattern.d} coordinates")
    for j in range(pattern.d):
        values = np.unique(pattern.sites[:, j])
        gap = np.abs(values - z[j]).min()
        if gap < guard:
            raise OffsetError(
                f"offset coordinate z[{j}]={z[j]} is within {gap:.3g} < {guard} "
                "of a lattice coordinate plane"
            )
    return z
