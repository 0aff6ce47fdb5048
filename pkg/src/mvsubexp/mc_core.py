"""Monte Carlo engine: counter-based streams, crude MC and generalized splitting.

Rare-event statistics are written as deterministic functions of a block of
i.i.d. standard normals (a :class:`LatentStatistic`).  Splitting then runs in
that latent Gaussian space: survivors of a level are cloned and moved with a
preconditioned Crank-Nicolson proposal ``z' = rho z + sqrt(1 - rho^2) xi``
restricted to the level set, which leaves the conditional law invariant.
The product of the level passage fractions is an unbiased estimate of the
exceedance probability for fixed levels and move parameters.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

__all__ = [
    "Method",
    "Estimate",
    "MeanEstimate",
    "RngStream",
    "LatentStatistic",
    "SplittingConfig",
    "EngineConfig",
    "ModuleTag",
    "stream_id",
    "wilson_interval",
    "estimate_crude",
    "crude_latent",
    "estimate_splitting",
    "auto_levels",
    "adaptive_ladder",
    "estimate_tail",
    "estimate_mean_latent",
    "analytic_estimate",
]

Z95 = float(stats.norm.ppf(0.975))


class Method(str, enum.Enum):
    CRUDE = "crude"
    SPLITTING = "splitting"
    ANALYTIC = "analytic"


class ModuleTag(enum.IntEnum):
    """High 32 bits of stream ids, one value per calling context."""

    GENERIC = 0
    SCALAR = 1
    VECTOR = 2
    CONVOLUTION = 3
    STOPPED = 4
    LARGE_DEV = 5
    COUNTING = 6
    RISK = 7
    PILOT = 8
    ENGINE_TEST = 9


def stream_id(tag: int, index: int) -> int:
    if not 0 <= index < 2 ** 32 or not 0 <= tag < 2 ** 32:
        raise ValueError("tag and index must fit in 32 bits")
    return (int(tag) << 32) | int(index)


@dataclass(frozen=True)
class RngStream:
    """Philox stream keyed by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % 2 ** 64, self.stream_id % 2 ** 64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass
class Estimate:
    value: float
    stderr: float
    n_effective: float
    ci95: tuple[float, float]
    method: Method
    zero_hit: bool = False
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def lo(self) -> float:
        return self.ci95[0]

    @property
    def hi(self) -> float:
        return self.ci95[1]

    @property
    def rel_halfwidth(self) -> float:
        if self.value <= 0:
            return math.inf
        return (self.ci95[1] - self.ci95[0]) / (2.0 * self.value)

    def scaled(self, factor: float) -> "Estimate":
        """Estimate of ``factor * p`` (used for ratio targets, not probabilities)."""
        return replace(self, value=self.value * factor, stderr=self.stderr * factor,
                       ci95=(self.ci95[0] * factor, self.ci95[1] * factor))

    def to_dict(self) -> dict[str, Any]:
        out = {
            "value": self.value,
            "stderr": self.stderr,
            "n_effective": self.n_effective,
            "ci_lo": self.ci95[0],
            "ci_hi": self.ci95[1],
            "method": self.method.value,
            "zero_hit": self.zero_hit,
        }
        for k, v in self.extra.items():
            if isinstance(v, (int, float, str, bool)):
                out[k] = v
        return out


@dataclass(frozen=True)
class MeanEstimate:
    value: float
    stderr: float
    n: int
    method: Method


def analytic_estimate(value: float) -> Estimate:
    value = float(min(max(value, 0.0), 1.0))
    return Estimate(value, 0.0, math.inf, (value, value), Method.ANALYTIC)


def wilson_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        return (0.0, 1.0)
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # keep lo <= value <= hi exactly despite rounding
    return (min(lo, p), max(hi, p))


def _crude_from_counts(hits: int, n: int, extra: dict | None = None) -> Estimate:
    p = hits / n
    if hits == 0:
        return Estimate(0.0, 0.0, float(n), (0.0, min(1.0, 3.0 / n)), Method.CRUDE, True,
                        dict(extra or {}, hits=0, n=n))
    se = math.sqrt(p * (1 - p) / n)
    return Estimate(p, se, float(n), wilson_interval(hits, n), Method.CRUDE, False,
                    dict(extra or {}, hits=hits, n=n))


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("MVSUBEXP_WORKERS")
        workers = int(env) if env else 1
    return max(1, int(workers))


def _ordered_map(fn: Callable[[int], Any], indices: Sequence[int], workers: int | None) -> list[Any]:
    """Map over indices, returning results in index order regardless of pool size."""
    workers = _resolve_workers(workers)
    if workers == 1 or len(indices) <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices))


def estimate_crude(event: Callable[[np.random.Generator, int], np.ndarray], n: int, seed: int,
                   tag: int = ModuleTag.GENERIC, chunk_size: int = 65536,
                   workers: int | None = None) -> Estimate:
    """Crude Monte Carlo for ``P[event]``.

    ``event(rng, m)`` returns ``m`` booleans.  Chunk ``c`` draws from stream
    ``(tag, c)``, so the result depends on ``(seed, chunk_size)`` only.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    n_chunks = -(-n // chunk_size)

    def run(c: int) -> int:
        m = min(chunk_size, n - c * chunk_size)
        rng = RngStream(seed, stream_id(tag, c)).generator()
        out = np.asarray(event(rng, m), dtype=bool)
        if out.shape != (m,):
            raise ValueError("event must return one boolean per draw")
        return int(out.sum())

    hits = sum(_ordered_map(run, range(n_chunks), workers))
    return _crude_from_counts(hits, n, {"chunk_size": chunk_size})


@dataclass(frozen=True)
class LatentStatistic:
    """A scalar statistic driven by ``dim`` standard normals per path.

    ``fn`` maps an ``(N, dim)`` array to ``N`` values.  ``final_fn``, when
    given, maps ``(z, values)`` to an ``(N, k)`` boolean array of sub-events
    of ``{value > x}`` whose probabilities are estimated alongside.
    """

    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    final_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    label: str = ""

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(z), dtype=float)

    def draw(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        z = rng.standard_normal((n, self.dim))
        return z, self(z)


def crude_latent(stat: LatentStatistic, x: float, n: int, seed: int, tag: int = ModuleTag.GENERIC,
                 chunk_size: int = 65536, workers: int | None = None) -> Estimate:
    """Crude MC for ``P[stat > x]``; sub-events from ``final_fn`` go in ``extra['sub']``."""
    n_chunks = -(-n // chunk_size)

    def run(c: int):
        m = min(chunk_size, n - c * chunk_size)
        rng = RngStream(seed, stream_id(tag, c)).generator()
        z, s = stat.draw(rng, m)
        hit = s > x
        sub = None
        if stat.final_fn is not None and hit.any():
            sub = np.asarray(stat.final_fn(z[hit], s[hit]), dtype=bool).reshape(int(hit.sum()), -1).sum(0)
        return int(hit.sum()), sub

    res = _ordered_map(run, range(n_chunks), workers)
    hits = sum(r[0] for r in res)
    est = _crude_from_counts(hits, n, {"chunk_size": chunk_size})
    if stat.final_fn is not None:
        subs = [r[1] for r in res if r[1] is not None and r[1].size]
        k = subs[0].size if subs else _final_width(stat)
        tot = np.sum(subs, axis=0) if subs else np.zeros(k, dtype=int)
        est.extra["sub"] = [_crude_from_counts(int(h), n) for h in tot]
    return est


def _final_width(stat: LatentStatistic) -> int:
    z = np.zeros((1, stat.dim))
    return np.asarray(stat.final_fn(z, stat(z)), dtype=bool).reshape(1, -1).shape[1]


@dataclass(frozen=True)
class SplittingConfig:
    n_per_level: int = 4000
    replicas: int = 10
    n_moves: int = 2
    p0: float = 0.2
    max_levels: int = 12
    pilot_n: int = 2000
    rho: float = 0.8

    def __post_init__(self):
        if self.n_per_level < 10 or self.replicas < 2 or self.n_moves < 1:
            raise ValueError("splitting needs n_per_level >= 10, replicas >= 2, n_moves >= 1")
        if not 0 < self.p0 < 1:
            raise ValueError("p0 must lie in (0, 1)")

    def with_budget(self, budget: int, expected_levels: int = 6) -> "SplittingConfig":
        """Choose ``n_per_level`` so roughly ``budget`` statistic evaluations are spent."""
        per = budget / (self.replicas * max(1, expected_levels) * (1 + self.n_moves))
        return replace(self, n_per_level=max(50, int(per)))


@dataclass(frozen=True)
class EngineConfig:
    seed: int = 20240601
    workers: int | None = None
    budget: int = 200_000
    chunk_size: int = 65536
    splitting: SplittingConfig = field(default_factory=SplittingConfig)


def _balanced_clone(rng: np.random.Generator, n_alive: int, n_target: int) -> np.ndarray:
    """Indices replicating each survivor floor or ceil of ``n_target / n_alive`` times."""
    base, rem = divmod(n_target, n_alive)
    counts = np.full(n_alive, base, dtype=np.int64)
    if rem:
        counts[rng.choice(n_alive, size=rem, replace=False)] += 1
    return np.repeat(np.arange(n_alive), counts)


def _pcn_moves(rng, stat: LatentStatistic, z, s, level, rho, n_moves):
    accepted = 0
    c = math.sqrt(1.0 - rho * rho)
    for _ in range(n_moves):
        prop = rho * z + c * rng.standard_normal(z.shape)
        sp = stat(prop)
        ok = sp > level
        z[ok] = prop[ok]
        s[ok] = sp[ok]
        accepted += int(ok.sum())
    return z, s, accepted / (n_moves * len(s))


def _adapt_rho(rho: float, acc: float) -> float:
    if acc < 0.15:
        return min(0.995, 1.0 - (1.0 - rho) * 0.5)
    if acc > 0.5:
        return max(0.0, 1.0 - (1.0 - rho) * 1.5)
    return rho


@dataclass
class _Replica:
    value: float
    fractions: list[float]
    prod_so_far: float
    sub: np.ndarray | None
    evals: int
    acceptance: list[float]


def _one_replica(stat: LatentStatistic, levels: Sequence[float], cfg: SplittingConfig,
                 rhos: Sequence[float] | None, rng: np.random.Generator) -> _Replica:
    n = cfg.n_per_level
    z, s = stat.draw(rng, n)
    evals = n
    fractions: list[float] = []
    acceptance: list[float] = []
    prod = 1.0
    rho = cfg.rho
    for j, level in enumerate(levels):
        alive = s > level
        k = int(alive.sum())
        frac = k / n
        fractions.append(frac)
        if k == 0:
            return _Replica(0.0, fractions, prod, None, evals, acceptance)
        prod *= frac
        if j == len(levels) - 1:
            sub = None
            if stat.final_fn is not None:
                sub = np.asarray(stat.final_fn(z[alive], s[alive]), dtype=bool).reshape(k, -1).mean(0) * prod
            return _Replica(prod, fractions, prod, sub, evals, acceptance)
        idx = np.flatnonzero(alive)[_balanced_clone(rng, k, n)]
        z, s = z[idx], s[idx]
        if rhos is not None:
            rho = rhos[j]
        z, s, acc = _pcn_moves(rng, stat, z, s, level, rho, cfg.n_moves)
        acceptance.append(acc)
        evals += n * cfg.n_moves
        if rhos is None:
            rho = _adapt_rho(rho, acc)
    raise AssertionError("unreachable")


def _combine_replicas(reps: list[_Replica], cfg: SplittingConfig, levels, extra) -> Estimate:
    vals = np.array([r.value for r in reps])
    R, n = len(reps), cfg.n_per_level
    value = float(vals.mean())
    evals = int(sum(r.evals for r in reps))
    extra = dict(extra, levels=len(levels), replicas=R, n_per_level=n, evals=evals,
                 replica_sd=float(vals.std(ddof=1)))
    if value == 0.0:
        bound = max(r.prod_so_far for r in reps) * 3.0 / (n * R)
        n_eff = 3.0 / bound
        est = Estimate(0.0, 0.0, n_eff, (0.0, min(1.0, bound)), Method.SPLITTING, True, extra)
    else:
        # delta method on the level fractions of the pooled run ...
        fr = np.array([[f for f in r.fractions] for r in reps if len(r.fractions) == len(levels)])
        pj = fr.mean(0) if fr.size else np.full(len(levels), 1.0)
        pj = np.clip(pj, 1e-300, 1.0)
        rel_var = float(np.sum((1.0 - pj) / (n * R * pj)))
        se_delta = value * math.sqrt(rel_var)
        # ... guarded by the spread between independent replicas, which also
        # captures the correlation introduced by cloning
        se_rep = float(vals.std(ddof=1) / math.sqrt(R))
        se = max(se_delta, se_rep)
        # Student-t quantile: the spread is estimated from only R replicas
        zq = float(stats.t.ppf(0.975, R - 1))
        lo, hi = max(0.0, value - zq * se), min(1.0, value + zq * se)
        n_eff = value * (1 - value) / se ** 2 if se > 0 else math.inf
        extra["se_delta"], extra["se_replica"] = se_delta, se_rep
        est = Estimate(value, se, n_eff, (min(lo, value), max(hi, value)), Method.SPLITTING, False, extra)
    subs = [r.sub for r in reps]
    if any(sb is not None for sb in subs):
        width = next(sb.size for sb in subs if sb is not None)
        mat = np.array([sb if sb is not None else np.zeros(width) for sb in subs])
        sub_est = []
        for col in mat.T:
            v = float(col.mean())
            se_c = float(col.std(ddof=1) / math.sqrt(R))
            if v > 0 and value > 0:
                se_c = max(se_c, est.stderr * v / value)
            if v == 0:
                sub_est.append(Estimate(0.0, 0.0, est.n_effective, (0.0, est.hi), Method.SPLITTING, True))
            else:
                zq = float(stats.t.ppf(0.975, R - 1))
                sub_est.append(Estimate(v, se_c, v * (1 - v) / se_c ** 2 if se_c > 0 else math.inf,
                                        (max(0.0, v - zq * se_c), min(1.0, v + zq * se_c)),
                                        Method.SPLITTING))
        est.extra["sub"] = sub_est
    elif stat_has_final(extra):
        est.extra["sub"] = [Estimate(0.0, 0.0, est.n_effective, (0.0, est.hi), Method.SPLITTING, True)
                            for _ in range(extra["final_width"])]
    return est


def stat_has_final(extra: dict) -> bool:
    return extra.get("final_width", 0) > 0


def estimate_splitting(stat: LatentStatistic, x: float, levels: Sequence[float] | None = None,
                       n_per_level: int | None = None, seed: int = 0,
                       config: SplittingConfig | None = None, tag: int = ModuleTag.GENERIC,
                       workers: int | None = None, rhos: Sequence[float] | None = None) -> Estimate:
    """Fixed-effort generalized splitting estimate of ``P[stat > x]``.

    Levels must be strictly increasing and end at ``x``; ``None`` picks them
    with :func:`adaptive_ladder` from an independent pilot run.  The run is
    repeated over ``config.replicas`` independent replicas (streams
    ``(tag, 1..R)``) whose mean is reported.
    """
    cfg = config or SplittingConfig()
    if n_per_level is not None:
        cfg = replace(cfg, n_per_level=int(n_per_level))
    extra: dict[str, Any] = {}
    if levels is None:
        pilot_levels, pilot_rhos = adaptive_ladder(stat, x, cfg, seed=seed, tag=tag)
        levels = pilot_levels
        rhos = pilot_rhos if rhos is None else rhos
        extra["auto_levels"] = True
    levels = [float(v) for v in levels]
    if not levels or levels[-1] != float(x):
        raise ValueError("levels must end at x")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    if rhos is not None and len(rhos) < len(levels) - 1:
        raise ValueError("need one rho per intermediate level")
    if stat.final_fn is not None:
        extra["final_width"] = _final_width(stat)

    def run(i: int) -> _Replica:
        rng = RngStream(seed, stream_id(tag, i + 1)).generator()
        return _one_replica(stat, levels, cfg, rhos, rng)

    reps = _ordered_map(run, list(range(cfg.replicas)), workers)
    est = _combine_replicas(reps, cfg, levels, extra)
    est.extra["level_values"] = list(levels)
    return est


def adaptive_ladder(stat: LatentStatistic, x: float, cfg: SplittingConfig | None = None,
                    seed: int = 0, tag: int = ModuleTag.GENERIC) -> tuple[list[float], list[float]]:
    """Pilot subset-simulation run returning ``(levels, rhos)``.

    Each intermediate level is the empirical ``1 - p0`` quantile of the
    current population; ``rhos[j]`` is the pCN correlation tuned while moving
    above level ``j``.  The pilot uses its own stream so the main run stays
    independent of it.
    """
    cfg = cfg or SplittingConfig()
    n = max(cfg.pilot_n, 100)
    rng = RngStream(seed, stream_id(ModuleTag.PILOT, (int(tag) * 7919) % 2 ** 32)).generator()
    z, s = stat.draw(rng, n)
    levels: list[float] = []
    rhos: list[float] = []
    rho = cfg.rho
    while True:
        if len(levels) == cfg.max_levels - 1:
            levels.append(float(x))
            break
        q = float(np.quantile(s, 1.0 - cfg.p0))
        if q >= x or np.all(s == s[0]):
            levels.append(float(x))
            break
        if levels and q <= levels[-1]:
            # atom at the current level: step to the next distinct value
            above = s[s > levels[-1]]
            if above.size == 0:
                levels.append(float(x))
                break
            q = float(above.min())
            if q >= x:
                levels.append(float(x))
                break
        alive = s > q
        k = int(alive.sum())
        if k == 0:
            levels.append(float(x))
            break
        levels.append(q)
        idx = np.flatnonzero(alive)[_balanced_clone(rng, k, n)]
        z, s = z[idx], s[idx]
        # tune rho on this level with a few extra sweeps
        for _ in range(3):
            z, s, acc = _pcn_moves(rng, stat, z, s, q, rho, 1)
            new = _adapt_rho(rho, acc)
            if new == rho:
                break
            rho = new
        rhos.append(rho)
    return levels, rhos


def auto_levels(pilot, x: float, pilot_n: int = 1000, seed: int = 0, p0: float = 0.2,
                max_levels: int = 12) -> list[float]:
    """Quantile ladder ending at ``x`` with per-level passage near ``p0``.

    ``pilot`` is either a :class:`LatentStatistic` (levels from an adaptive
    pilot run) or a callable ``pilot(rng, n)`` returning ``n`` values, in
    which case the ladder is read off the crude pilot sample and stops where
    fewer than ten pilot values remain above the next level.
    """
    if pilot_n < 1000:
        raise ValueError("pilot_n must be >= 1000")
    if isinstance(pilot, LatentStatistic):
        cfg = SplittingConfig(pilot_n=pilot_n, p0=p0, max_levels=max_levels)
        return adaptive_ladder(pilot, x, cfg, seed)[0]
    vals = np.asarray(pilot(RngStream(seed, stream_id(ModuleTag.PILOT, 0)).generator(), pilot_n), dtype=float)
    if np.all(vals == vals[0]):
        return [float(x)]
    levels: list[float] = []
    k = 1
    while len(levels) < max_levels - 1:
        prob = p0 ** k
        if prob * pilot_n < 10:
            break
        q = float(np.quantile(vals, 1.0 - prob))
        if q >= x:
            break
        if not levels or q > levels[-1]:
            levels.append(q)
        k += 1
    levels.append(float(x))
    return levels


def estimate_tail(stat: LatentStatistic, x: float, method: str = "auto", engine: EngineConfig | None = None,
                  tag: int = ModuleTag.GENERIC, budget: int | None = None) -> Estimate:
    """``P[stat > x]`` by crude MC or splitting under a total evaluation budget."""
    eng = engine or EngineConfig()
    budget = int(budget or eng.budget)
    if method == "crude":
        return crude_latent(stat, x, budget, eng.seed, tag, eng.chunk_size, eng.workers)
    if method not in ("auto", "splitting"):
        raise ValueError(f"unknown method {method!r}")
    cfg = eng.splitting
    levels, rhos = adaptive_ladder(stat, x, cfg, seed=eng.seed, tag=tag)
    cfg = cfg.with_budget(budget, expected_levels=len(levels))
    est = estimate_splitting(stat, x, levels, seed=eng.seed, config=cfg, tag=tag,
                             workers=eng.workers, rhos=rhos)
    est.extra["auto_levels"] = True
    return est


def estimate_mean_latent(fn: Callable[[np.ndarray], np.ndarray], dim: int, n: int, seed: int,
                         tag: int = ModuleTag.GENERIC, chunk_size: int = 65536,
                         workers: int | None = None) -> MeanEstimate:
    """Sample mean of ``fn(z)`` with chunk-ordered, exactly reproducible sums."""
    n_chunks = -(-n // chunk_size)

    def run(c: int):
        m = min(chunk_size, n - c * chunk_size)
        rng = RngStream(seed, stream_id(tag, c)).generator()
        v = np.asarray(fn(rng.standard_normal((m, dim))), dtype=float)
        return float(v.sum()), float((v * v).sum())

    res = _ordered_map(run, range(n_chunks), workers)
    s1 = math.fsum(r[0] for r in res)
    s2 = math.fsum(r[1] for r in res)
    mean = s1 / n
    var = max(0.0, s2 / n - mean * mean) * n / max(1, n - 1)
    if not math.isfinite(mean):
        return MeanEstimate(mean, math.inf, n, Method.CRUDE)
    return MeanEstimate(mean, math.sqrt(var / n), n, Method.CRUDE)
