"""Increasing rare sets encoded by finite direction sets.

A set is ``A = {x : p.x > 1 for some p in I_A}`` with ``I_A`` a finite list of
non-negative, non-zero vectors.  Its scalar projection is
``Y_A(x) = max_p p.x`` and ``x`` lies in ``sA`` exactly when ``Y_A(x) > s``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "RareSet",
    "RuinSetKind",
    "make_halfspace_set",
    "make_orthant_exceedance_set",
    "make_ruin_translate",
    "y_projection",
    "contains",
    "grid_scan_projection",
    "rare_set_from_config",
]


class RuinSetKind(str, enum.Enum):
    SUM_NEGATIVE = "sum_negative"
    ANY_NEGATIVE = "any_negative"


@dataclass(frozen=True, eq=False)
class RareSet:
    directions: np.ndarray
    label: str = ""
    config: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        dirs = np.array(self.directions, dtype=float, copy=True)
        if dirs.ndim == 1:
            dirs = dirs[None, :]
        if dirs.ndim != 2 or dirs.shape[0] == 0 or dirs.shape[1] == 0:
            raise ValueError("directions must be a non-empty (k, d) array")
        if not np.all(np.isfinite(dirs)) or np.any(dirs < 0):
            raise ValueError("direction vectors must be finite and non-negative")
        if np.any(dirs.sum(axis=1) == 0):
            raise ValueError("a direction vector is zero")
        dirs.setflags(write=False)
        object.__setattr__(self, "directions", dirs)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def y_projection(self, x):
        """Vectorized ``max_p p.x`` over the trailing axis of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: got {x.shape[-1]}, set has {self.dim}")
        out = (x @ self.directions.T).max(axis=-1)
        return float(out) if out.ndim == 0 else out

    def contains(self, x, scale):
        """Whether ``x`` lies in ``scale * A``.

        Sets built from a named family test membership from that family's
        defining inequality; generic direction sets fall back to the projection.
        """
        scale = np.asarray(scale, dtype=float)
        if np.any(scale <= 0):
            raise ValueError("scale must be positive")
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: got {x.shape[-1]}, set has {self.dim}")
        kind = self.config.get("kind")
        if kind == "halfspace":
            l = np.asarray(self.config["weights"])
            out = x @ l > self.config["c"] * scale
        elif kind == "orthant":
            b = np.asarray(self.config["thresholds"])
            out = np.any(x > b * scale[..., None], axis=-1)
        elif kind == "ruin_translate":
            # x in s(l - L)  <=>  s l - x in s L
            l = np.asarray(self.config["allocation"])
            y = l * scale[..., None] - x
            if self.config["ruin_kind"] == RuinSetKind.SUM_NEGATIVE.value:
                out = y.sum(axis=-1) < 0
            else:
                out = np.any(y < 0, axis=-1)
        else:
            out = self.y_projection(x) > scale
        return bool(out) if np.ndim(out) == 0 else out

    def scaled(self, lam: float) -> "RareSet":
        """The set ``lam * A``."""
        if lam <= 0:
            raise ValueError("lam must be positive")
        return RareSet(self.directions / lam, label=f"{lam}*{self.label}")

    def entry_scale(self, direction) -> float:
        """inf{t > 0 : t * direction in A}; ``inf`` if the ray never enters."""
        v = float(np.max(self.directions @ np.asarray(direction, dtype=float)))
        return np.inf if v <= 0 else 1.0 / v

    def to_config(self) -> dict[str, Any]:
        if self.config:
            return dict(self.config)
        return {"kind": "directions", "directions": self.directions.tolist()}

    def __eq__(self, other):
        return isinstance(other, RareSet) and np.array_equal(self.directions, other.directions)

    def __hash__(self):
        return hash(self.directions.tobytes())


def make_halfspace_set(l, c: float) -> RareSet:
    """``{x : l.x > c}``."""
    l = np.asarray(l, dtype=float)
    if l.ndim != 1 or np.any(l < 0) or not np.any(l > 0):
        raise ValueError("weights must be non-negative and not all zero")
    if not c > 0:
        raise ValueError("c must be positive")
    return RareSet(l[None, :] / c, label="halfspace",
                   config={"kind": "halfspace", "weights": l.tolist(), "c": float(c)})


def make_orthant_exceedance_set(b) -> RareSet:
    """``{x : x_i > b_i for some i}``."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or np.any(~(b > 0)):
        raise ValueError("thresholds must be positive")
    return RareSet(np.diag(1.0 / b), label="orthant",
                   config={"kind": "orthant", "thresholds": b.tolist()})


def make_ruin_translate(l, kind: RuinSetKind | str) -> RareSet:
    """The translate ``l - L`` for the two standard ruin sets.

    For ``L = {sum y_i < 0}`` the translate is ``{sum x_i > 1}`` (since the
    allocation sums to one); for ``L = {some y_i < 0}`` it is the orthant
    exceedance set with thresholds ``l``.
    """
    kind = RuinSetKind(kind)
    l = np.asarray(l, dtype=float)
    if l.ndim != 1 or np.any(~(l > 0)):
        raise ValueError("allocation entries must be positive")
    if abs(l.sum() - 1.0) > 1e-12:
        raise ValueError("allocation must sum to one")
    d = l.size
    if kind is RuinSetKind.SUM_NEGATIVE:
        out = make_halfspace_set(np.full(d, 1.0 / d), 1.0 / d)
    else:
        out = make_orthant_exceedance_set(l)
    cfg = {"kind": "ruin_translate", "allocation": l.tolist(), "ruin_kind": kind.value}
    return RareSet(out.directions, label=f"ruin_{kind.value}", config=cfg)


def y_projection(A: RareSet, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be component-wise non-negative")
    return A.y_projection(x)


def contains(A: RareSet, x, scale):
    return A.contains(x, scale)


def grid_scan_projection(A: RareSet, x, delta: float = 1e-4, u_max: float = 1e12) -> np.ndarray:
    """Membership-only oracle for ``Y_A``: the largest grid point ``k * delta``
    with ``x`` in ``(k * delta) A``, found by bisection over ``k``.

    Membership in ``uA`` is monotone in ``u``, so bisection on the index is
    the same as scanning the grid.  Returns zero when no grid point is inside.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    lo = np.zeros(n, dtype=np.int64)  # invariant: grid point lo is inside (or lo == 0)
    hi = np.full(n, int(u_max / delta) + 1, dtype=np.int64)  # grid point hi is outside
    while np.any(hi - lo > 1):
        mid = (lo + hi) // 2
        inside = A.contains(x, np.maximum(mid, 1) * delta)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return lo * delta


def rare_set_from_config(cfg: dict[str, Any]) -> RareSet:
    kind = cfg.get("kind")
    if kind == "halfspace":
        return make_halfspace_set(cfg["weights"], cfg["c"])
    if kind == "orthant":
        return make_orthant_exceedance_set(cfg["thresholds"])
    if kind == "ruin_translate":
        return make_ruin_translate(cfg["allocation"], cfg["ruin_kind"])
    if kind == "directions":
        return RareSet(np.asarray(cfg["directions"], dtype=float), label="custom")
    raise ValueError(f"unknown set kind {kind!r}")
