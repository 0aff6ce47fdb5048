"""Latent-space statistics for sums of claim vectors.

Each builder returns a :class:`~mvsubexp.mc_core.LatentStatistic` whose normal
block is laid out as ``[arrival or stopping block | claim block]``.  Claim
vectors occupy consecutive ``vlaw.latent_dim`` slices, so a random sum whose
count happens to be deterministic uses exactly the same layout (and hence the
same numbers) as the corresponding fixed-``n`` sum.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import stats

from . import scalar_laws as sl
from .counting import CountingProcess, count_paths
from .errors import PreconditionError, TauOverflow
from .mc_core import LatentStatistic, ModuleTag, RngStream, stream_id
from .rare_sets import RareSet
from .vector_laws import VectorLaw

__all__ = [
    "sum_statistic",
    "nfold_statistic",
    "stopped_sum_statistic",
    "random_sum_statistic",
    "arrival_cap",
    "TAU_TAIL_CUTOFF",
    "TAU_MAX_TERMS",
]

TAU_TAIL_CUTOFF = 1e-14
TAU_MAX_TERMS = 1_000_000


def _claims(vlaw: VectorLaw, zc: np.ndarray, m: int) -> np.ndarray:
    """``(N, m, d)`` claim vectors from an ``(N, m * latent_dim)`` block."""
    n = zc.shape[0]
    ld = vlaw.latent_dim
    flat = vlaw.from_normal(zc.reshape(n * m, ld))
    return flat.reshape(n, m, vlaw.dim)


def _masked_sum(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask[:, :, None], x, 0.0).sum(axis=1)


def sum_statistic(vlaws: Sequence[VectorLaw], A: RareSet, coefs: Sequence[float] | None = None,
                  label: str = "sum") -> LatentStatistic:
    """``Y_A(sum_i c_i X_i)`` with independent ``X_i ~ vlaws[i]``."""
    vlaws = list(vlaws)
    if not vlaws:
        raise ValueError("need at least one summand")
    if any(v.dim != A.dim for v in vlaws):
        raise ValueError("dimension mismatch between laws and set")
    c = np.ones(len(vlaws)) if coefs is None else np.asarray(coefs, dtype=float)
    if c.shape != (len(vlaws),) or np.any(c < 0):
        raise ValueError("coefficients must be non-negative, one per summand")
    same = all(v is vlaws[0] or v == vlaws[0] for v in vlaws)
    if same and coefs is None:
        return nfold_statistic(vlaws[0], A, len(vlaws))
    widths = [v.latent_dim for v in vlaws]
    starts = np.concatenate([[0], np.cumsum(widths)])

    def fn(z):
        s = np.zeros((z.shape[0], A.dim))
        for v, a, b, ci in zip(vlaws, starts[:-1], starts[1:], c):
            s += ci * v.from_normal(z[:, a:b])
        return A.y_projection(s)

    return LatentStatistic(int(starts[-1]), fn, label=label)


def nfold_statistic(vlaw: VectorLaw, A: RareSet, n: int) -> LatentStatistic:
    """``Y_A(X_1 + ... + X_n)`` for i.i.d. summands."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if vlaw.dim != A.dim:
        raise ValueError("dimension mismatch between law and set")
    ld = vlaw.latent_dim

    def fn(z):
        if n == 0:
            return np.zeros(z.shape[0])
        x = _claims(vlaw, z, n)
        mask = np.ones((z.shape[0], n), dtype=bool)
        return A.y_projection(_masked_sum(x, mask))

    return LatentStatistic(n * ld, fn, label=f"S_{n}")


def _tau_cap(tau: sl.ScalarLaw) -> int:
    cap = float(tau.isf(TAU_TAIL_CUTOFF))
    if not math.isfinite(cap) or cap > TAU_MAX_TERMS:
        raise TauOverflow(f"stopping variable needs more than {TAU_MAX_TERMS} terms")
    return int(math.ceil(cap))


def stopped_sum_statistic(vlaw: VectorLaw, tau: sl.ScalarLaw, A: RareSet) -> LatentStatistic:
    """``Y_A(S_tau)`` with ``tau`` independent of the summands.

    ``tau`` is truncated at its ``1 - 1e-14`` quantile; a degenerate ``tau``
    reduces exactly to the fixed-``n`` statistic.
    """
    if not tau.discrete:
        raise PreconditionError("the stopping variable must be integer valued")
    if isinstance(tau, sl.Degenerate):
        k = int(tau.value)
        if k != tau.value or k < 0:
            raise PreconditionError("a degenerate stopping variable must be a non-negative integer")
        return nfold_statistic(vlaw, A, k)
    cap = _tau_cap(tau)
    ld = vlaw.latent_dim

    def fn(z):
        t = np.minimum(tau.from_normal(z[:, 0]), cap)
        x = _claims(vlaw, z[:, 1:], cap)
        mask = np.arange(cap)[None, :] < t[:, None]
        return A.y_projection(_masked_sum(x, mask))

    return LatentStatistic(1 + cap * ld, fn, label="S_tau")


def arrival_cap(cp: CountingProcess, t: float, seed: int = 0, pilot_n: int = 20000) -> int:
    """Number of arrival slots so that ``P[N(t) >= cap]`` is negligible.

    Exact for deterministic processes, a Poisson quantile at ``1e-14`` for
    Poisson arrivals, and ``2 * max + 10`` over a pilot run otherwise.
    """
    if cp.deterministic:
        return int(cp.deterministic_epochs(t).size)
    rate = cp.poisson_rate
    if rate is not None:
        return int(stats.poisson.isf(TAU_TAIL_CUTOFF, rate * t)) + 2
    rng = RngStream(seed, stream_id(ModuleTag.PILOT, 1)).generator()
    counts = count_paths(cp, t, pilot_n, rng)
    return int(2 * counts.max() + 10)


def random_sum_statistic(vlaw: VectorLaw, cp: CountingProcess, A: RareSet, t: float,
                         r: float = 0.0, premiums: Sequence[float] | None = None,
                         ruin_x: float | None = None, cap: int | None = None,
                         seed: int = 0) -> LatentStatistic:
    """``Y_A(D_r(t))`` with ``D_r(t) = sum_{k <= N(t)} X_k exp(-r tau_k)``.

    With ``ruin_x`` set, ``final_fn`` flags paths where the premium-adjusted
    discounted claims ``D_r(tau_k) - P(tau_k)`` enter ``ruin_x * A`` at some
    claim epoch ``tau_k <= t``, where ``P_i(s) = premiums_i (1 - e^{-rs}) / r``
    is the discounted income at constant premium rates.  Because premiums are
    non-negative and the set is increasing, that event is contained in
    ``{Y_A(D_r(t)) > ruin_x}``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if vlaw.dim != A.dim:
        raise ValueError("dimension mismatch between law and set")
    if r < 0:
        raise ValueError("interest force must be non-negative")
    m = arrival_cap(cp, t, seed) if cap is None else int(cap)
    ld = vlaw.latent_dim
    det_epochs = cp.deterministic_epochs(t)[:m] if cp.deterministic else None
    aw = 0 if cp.deterministic else m
    prem = None if premiums is None else np.asarray(premiums, dtype=float)
    if prem is not None and (prem.shape != (A.dim,) or np.any(prem < 0)):
        raise ValueError("premium rates must be non-negative, one per line")

    def epochs_and_claims(z):
        n = z.shape[0]
        if det_epochs is not None:
            ep = np.broadcast_to(det_epochs, (n, m))
            mask = np.ones((n, m), dtype=bool)
        else:
            ep = np.cumsum(cp.gaps_from_normal(z[:, :aw]), axis=1)
            mask = ep <= t
        x = _claims(vlaw, z[:, aw:], m)
        if r > 0:
            x = x * np.exp(-r * ep)[:, :, None]
        return ep, mask, x

    def fn(z):
        if m == 0:
            return np.zeros(z.shape[0])
        _, mask, x = epochs_and_claims(z)
        return A.y_projection(_masked_sum(x, mask))

    final = None
    if ruin_x is not None:
        p = np.zeros(A.dim) if prem is None else prem

        def final(z, _vals):
            n = z.shape[0]
            if m == 0 or n == 0:
                return np.zeros((n, 1), dtype=bool)
            ep, mask, x = epochs_and_claims(z)
            dk = np.cumsum(np.where(mask[:, :, None], x, 0.0), axis=1)
            income = (-np.expm1(-r * ep) / r) if r > 0 else np.array(ep, dtype=float)
            v = dk - income[:, :, None] * p[None, None, :]
            y = A.y_projection(v)
            return (np.where(mask, y, -np.inf).max(axis=1) > ruin_x)[:, None]

    return LatentStatistic(aw + m * ld, fn, final, label=f"D_r({t})")
