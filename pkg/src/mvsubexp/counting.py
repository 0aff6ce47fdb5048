"""Counting processes with independent, not necessarily identical, inter-arrivals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import scalar_laws as sl
from .errors import ArrivalOverflow, PreconditionError
from .mc_core import MeanEstimate, Method, ModuleTag, RngStream, stream_id

__all__ = [
    "CountingProcess",
    "renewal",
    "cyclic",
    "geometric_storm",
    "simulate_counting",
    "count_paths",
    "lambda_mean",
    "counting_from_config",
    "MAX_ARRIVALS",
]

MAX_ARRIVALS = 10_000_000


@dataclass(frozen=True)
class CountingProcess:
    """Arrival epochs ``tau_n = theta_1 + ... + theta_n``.

    ``kind`` is ``"renewal"`` (one law repeated), ``"cyclic"`` (laws used in
    turn) or ``"storm"`` (deterministic gaps ``first * ratio**(i-1)``).
    ``offset`` drops the first ``offset`` inter-arrivals, which is how the
    delayed process is represented.
    """

    kind: str
    laws: tuple[sl.ScalarLaw, ...] = ()
    first: float = 1.0
    ratio: float = 1.0
    offset: int = 0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "laws", tuple(self.laws))
        if self.kind in ("renewal", "cyclic"):
            if not self.laws:
                raise ValueError("need at least one inter-arrival law")
            for law in self.laws:
                if float(law.tail(0.0)) < 1.0:
                    raise PreconditionError("inter-arrival laws must be strictly positive")
            if self.kind == "renewal" and len(self.laws) != 1:
                raise ValueError("a renewal process has exactly one law")
        elif self.kind == "storm":
            if not (self.first > 0 and self.ratio > 0):
                raise ValueError("storm gaps must be positive")
        else:
            raise ValueError(f"unknown counting process kind {self.kind!r}")

    def law(self, i: int) -> sl.ScalarLaw:
        """Law of ``theta_i`` (1-based)."""
        j = i + self.offset
        if self.kind == "storm":
            return sl.Degenerate(self.first * self.ratio ** (j - 1))
        return self.laws[(j - 1) % len(self.laws)]

    def delayed(self) -> "CountingProcess":
        """The process with the first inter-arrival removed."""
        return CountingProcess(self.kind, self.laws, self.first, self.ratio, self.offset + 1,
                               f"{self.label}*" if self.label else "delayed")

    @property
    def poisson_rate(self) -> float | None:
        if self.kind == "renewal" and isinstance(self.laws[0], sl.Exponential):
            return self.laws[0].rate
        return None

    @property
    def deterministic(self) -> bool:
        return self.kind == "storm" or all(isinstance(m, sl.Degenerate) for m in self.laws)

    def deterministic_epochs(self, t: float, limit: int = MAX_ARRIVALS) -> np.ndarray:
        """Epochs ``<= t`` of a deterministic process (cumulative sums of the gaps)."""
        if not self.deterministic:
            raise PreconditionError("process is random")
        if self.kind == "storm" and self.ratio < 1:
            start = self.first * self.ratio ** self.offset
            if start / (1.0 - self.ratio) <= t:
                raise ArrivalOverflow(f"infinitely many arrivals before t={t}")
        out: list[float] = []
        s = 0.0
        i = 1
        while True:
            s += float(self.law(i).value)
            if s > t:
                break
            out.append(s)
            if len(out) >= limit:
                raise ArrivalOverflow(f"more than {limit} arrivals before t={t}")
            i += 1
        return np.array(out)

    def gaps_from_normal(self, z: np.ndarray) -> np.ndarray:
        """Inter-arrivals ``theta_1..theta_M`` from an ``(N, M)`` normal block."""
        z = np.asarray(z, dtype=float)
        m = z.shape[1]
        out = np.empty_like(z)
        if self.kind == "renewal":
            out[:] = self.laws[0].from_normal(z)
            return out
        if self.kind == "cyclic":
            k = len(self.laws)
            for j in range(k):
                cols = np.arange(m)[(np.arange(m) + self.offset) % k == j]
                if cols.size:
                    out[:, cols] = self.laws[j].from_normal(z[:, cols])
            return out
        out[:] = np.array([self.law(i).value for i in range(1, m + 1)])[None, :]
        return out

    def analytic_lambda(self, t: float) -> float | None:
        if t < 0:
            raise ValueError("t must be non-negative")
        rate = self.poisson_rate
        if rate is not None:
            return rate * t
        if self.deterministic:
            return float(self.deterministic_epochs(t).size)
        return None

    def to_config(self) -> dict[str, Any]:
        if self.kind == "storm":
            cfg = {"kind": "storm", "first": self.first, "ratio": self.ratio}
        else:
            cfg = {"kind": self.kind, "laws": [m.to_config() for m in self.laws]}
        if self.offset:
            cfg["offset"] = self.offset
        return cfg


def renewal(law: sl.ScalarLaw, label: str = "") -> CountingProcess:
    return CountingProcess("renewal", (law,), label=label or f"renewal({law.family})")


def cyclic(laws, label: str = "") -> CountingProcess:
    return CountingProcess("cyclic", tuple(laws), label=label or "cyclic")


def geometric_storm(first: float, ratio: float, label: str = "") -> CountingProcess:
    """Deterministic gaps ``first * ratio**(i-1)``; with ``ratio < 1`` the
    epochs accumulate at ``first / (1 - ratio)``."""
    return CountingProcess("storm", (), first, ratio, label=label or "storm")


def simulate_counting(cp: CountingProcess, t: float, rng: np.random.Generator,
                      max_arrivals: int = MAX_ARRIVALS) -> tuple[int, np.ndarray]:
    """One path: ``(N(t), epochs)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    epochs: list[np.ndarray] = []
    total, count, i, block = 0.0, 0, 1, 64
    while True:
        m = min(block, max_arrivals + 1 - count)
        z = rng.standard_normal((1, m))
        sub = CountingProcess(cp.kind, cp.laws, cp.first, cp.ratio, cp.offset + i - 1)
        gaps = sub.gaps_from_normal(z)[0]
        ep = total + np.cumsum(gaps)
        inside = ep <= t
        k = int(np.argmin(inside)) if not inside.all() else m
        epochs.append(ep[:k])
        count += k
        if count > max_arrivals:
            raise ArrivalOverflow(f"more than {max_arrivals} arrivals before t={t}")
        if k < m:
            break
        total = float(ep[-1])
        i += m
        block = min(block * 2, 1 << 20)
    return count, np.concatenate(epochs) if epochs else np.empty(0)


def count_paths(cp: CountingProcess, t: float, n: int, rng: np.random.Generator,
                max_arrivals: int = MAX_ARRIVALS) -> np.ndarray:
    """``N(t)`` for ``n`` independent paths, vectorized over paths."""
    if cp.deterministic:
        return np.full(n, cp.deterministic_epochs(t, max_arrivals).size, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    total = np.zeros(n)
    active = np.ones(n, dtype=bool)
    done, block = 0, 32
    while active.any():
        idx = np.flatnonzero(active)
        sub = CountingProcess(cp.kind, cp.laws, cp.first, cp.ratio, cp.offset + done)
        gaps = sub.gaps_from_normal(rng.standard_normal((idx.size, block)))
        ep = total[idx, None] + np.cumsum(gaps, axis=1)
        inside = ep <= t
        counts[idx] += inside.sum(axis=1)
        still = inside[:, -1]
        total[idx] = ep[:, -1]
        active[idx] = still
        done += block
        if done > max_arrivals:
            raise ArrivalOverflow(f"more than {max_arrivals} arrivals before t={t}")
        block = min(block * 2, 4096)
    return counts


def lambda_mean(cp: CountingProcess, t: float, budget: int = 20000, seed: int = 0,
                tag: int = 0) -> MeanEstimate:
    """``lambda(t) = E[N(t)]``; exact for Poisson and deterministic processes."""
    val = cp.analytic_lambda(t)
    if val is not None:
        return MeanEstimate(val, 0.0, 0, Method.ANALYTIC)
    rng = RngStream(seed, stream_id(ModuleTag.COUNTING, tag)).generator()
    counts = count_paths(cp, t, budget, rng)
    return MeanEstimate(float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(budget)), budget,
                        Method.CRUDE)


def counting_from_config(cfg: dict[str, Any]) -> CountingProcess:
    kind = cfg.get("kind")
    offset = int(cfg.get("offset", 0))
    if kind == "poisson":
        return renewal(sl.Exponential(float(cfg.get("rate", 1.0))), label="poisson")
    if kind in ("renewal", "cyclic"):
        laws = tuple(sl.law_from_config(m) for m in cfg["laws"])
        return CountingProcess(kind, laws, offset=offset, label=kind)
    if kind == "storm":
        return CountingProcess("storm", (), float(cfg["first"]), float(cfg["ratio"]), offset, "storm")
    raise ValueError(f"unknown counting process kind {kind!r}")
