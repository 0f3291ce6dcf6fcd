"""Trajectory simulation for the Gaussian-marginal martingale family.

Two simulation modes:

- *grid*: for any calibrated family, the scale recursion
  ``X_t = sqrt(t/s) * (sqrt(R) X_s + sqrt(s) sqrt(1-R) xi)`` applied step by
  step, with an exact Gaussian first step out of the origin (the recursion's
  scale ratio is undefined at s = 0);
- *event-driven*: exact piecewise-deterministic simulation for the Poisson
  kind only.  Between jumps the path follows the deterministic flow
  ``x(u) = x(s) * sqrt(u/s)``; waiting times are drawn by exact inversion of
  the power-law survival ``(s/t)**(c/2)`` (no thinning, no rate bound), and
  a jump at time T moves the pre-jump value x to
  ``x + N((e^{-1/2}-1) x, T (1 - e^{-1}))``.

The joint law of (jump time, jump size) beyond the first jump follows the
generator reading of the dynamics; multi-jump horizons are cross-validated
against grid mode distributionally rather than proven here.

Every path owns one random stream; ensemble routines assign path k the
stream ``stream_base + k``, so results are independent of chunking and
thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, FamilyError
from .sampler import RandomStream, StreamBundle, sample_subordinator_increment
from .semigroup import POISSON, SubordinatorFamily, delta, require_calibrated


@dataclass(frozen=True)
class PathGrid:
    """One trajectory sampled on a strictly increasing grid starting at (0, 0)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise DomainError("times and values must be equal-length 1-d arrays")
        if t[0] != 0.0 or v[0] != 0.0:
            raise DomainError("paths start at (time, value) = (0, 0)")
        if np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class EventPath:
    """One piecewise-deterministic trajectory with its recorded jumps."""

    start_time: float
    start_value: float
    horizon: float
    jump_times: np.ndarray
    pre_values: np.ndarray
    post_values: np.ndarray
    terminal_value: float

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "pre_values", np.asarray(self.pre_values, dtype=float))
        object.__setattr__(self, "post_values", np.asarray(self.post_values, dtype=float))
        if np.any(np.diff(jt) <= 0):
            raise DomainError("jump times must be strictly increasing")
        if jt.size and (jt[0] <= self.start_time or jt[-1] > self.horizon):
            raise DomainError("jump times must lie in (start_time, horizon]")

    @property
    def jumps(self) -> list[tuple[float, float, float]]:
        return list(zip(self.jump_times, self.pre_values, self.post_values))

    def validate(self, rtol: float = 1e-12) -> None:
        """Check the deterministic-flow identities along the path."""
        t_prev = self.start_time
        x_prev = self.start_value
        for t, pre, post in self.jumps:
            expected = x_prev * math.sqrt(t / t_prev)
            if abs(pre - expected) > rtol * max(1.0, abs(expected)):
                raise AssertionError("pre-jump value breaks the sqrt(t/s) flow")
            t_prev, x_prev = t, post
        expected = x_prev * math.sqrt(self.horizon / t_prev)
        if abs(self.terminal_value - expected) > rtol * max(1.0, abs(expected)):
            raise AssertionError("terminal value breaks the sqrt(t/s) flow")


def _check_grid_times(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise DomainError("need at least two grid times")
    if times[0] != 0.0:
        raise DomainError("grid must start at time 0")
    if np.any(np.diff(times) <= 0):
        raise DomainError("grid times must be strictly increasing")
    return times


def _grid_values(
    family: SubordinatorFamily,
    times: np.ndarray,
    bundle: StreamBundle,
    start_values=None,
) -> np.ndarray:
    """Core recursion over one bundle; returns values of shape (lanes, len(times)).

    times[0] == 0 starts fresh paths at the origin (exact Gaussian first
    step); otherwise ``start_values`` supplies the state at times[0].
    """
    require_calibrated(family)
    times = np.asarray(times, dtype=float)
    n = len(bundle)
    vals = np.empty((n, times.size))
    if times[0] == 0.0:
        if start_values is not None:
            raise DomainError("start_values only apply to grids starting after 0")
        vals[:, 0] = 0.0
        vals[:, 1] = math.sqrt(times[1]) * bundle.normals()
        k0 = 2
    else:
        if start_values is None:
            raise DomainError("grids starting after 0 need start_values")
        vals[:, 0] = np.broadcast_to(np.asarray(start_values, dtype=float), (n,))
        k0 = 1
    for k in range(k0, times.size):
        s, t = times[k - 1], times[k]
        sigma = math.sqrt(t / s)
        u = sample_subordinator_increment(family, sigma, bundle)
        xi = bundle.normals()
        sqrt_r = np.exp(-0.5 * u)
        sqrt_1mr = np.sqrt(-np.expm1(-u))
        vals[:, k] = sigma * (sqrt_r * vals[:, k - 1] + math.sqrt(s) * sqrt_1mr * xi)
    return vals


def simulate_grid(
    family: SubordinatorFamily, times, stream: RandomStream
) -> PathGrid:
    """Simulate one path on the given grid; consumes the stream."""
    times = _check_grid_times(times)
    values = _grid_values(family, times, stream.bundle)[0]
    return PathGrid(times=times, values=values)


def _chunks(n: int, threads) -> list[tuple[int, int]]:
    workers = threads if threads and threads > 0 else (os.cpu_count() or 1)
    if workers <= 1 or n < 8192:
        return [(0, n)]
    size = -(-n // workers)
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def simulate_grid_ensemble(
    family: SubordinatorFamily,
    times,
    seed: int,
    n_paths: int,
    stream_base: int = 0,
    threads: int | None = 1,
    start_values=None,
) -> np.ndarray:
    """Values array of shape (n_paths, len(times)); path k uses stream k + base.

    Identical results for every thread count: lanes are whole streams, so the
    chunking only decides which worker evaluates which counter-keyed block.
    """
    times = np.asarray(times, dtype=float)
    if times[0] == 0.0:
        times = _check_grid_times(times)
    out = np.empty((n_paths, times.size))
    sv = None if start_values is None else np.broadcast_to(
        np.asarray(start_values, dtype=float), (n_paths,)
    )

    def work(lo: int, hi: int) -> None:
        bundle = StreamBundle(
            seed, np.arange(stream_base + lo, stream_base + hi, dtype=np.uint64)
        )
        sub = None if sv is None else sv[lo:hi]
        out[lo:hi] = _grid_values(family, times, bundle, start_values=sub)

    parts = _chunks(n_paths, threads)
    if len(parts) == 1:
        work(*parts[0])
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            list(pool.map(lambda p: work(*p), parts))
    return out


def transition_pairs(
    family: SubordinatorFamily,
    s: float,
    t: float,
    seed: int,
    n: int,
    stream_base: int = 0,
    threads: int | None = 1,
):
    """(X_s, X_t) samples: exact Gaussian state at s, one recursion step to t."""
    if not 0 < s < t:
        raise DomainError("need 0 < s < t")
    vals = simulate_grid_ensemble(
        family, [0.0, s, t], seed, n, stream_base=stream_base, threads=threads
    )
    return vals[:, 1], vals[:, 2]


def conditional_moments(family: SubordinatorFamily, s, t, x):
    """Mean and second moment of X_t given X_s = x (closed form).

    mean = x (martingale); E[X_t^2 | X_s = x] =
    t (1 - (s/t)**delta) + (t/s)**(1-delta) * x**2.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s <= 0) or np.any(t < s):
        raise DomainError("need 0 < s <= t")
    d = delta(family)
    x = np.asarray(x, dtype=float)
    second = t * (1.0 - (s / t) ** d) + (t / s) ** (1.0 - d) * x**2
    mean = x + np.zeros_like(second)
    if mean.ndim == 0:
        return float(mean), float(second)
    return mean, second


# ---------------------------------------------------------------------------
# event-driven mode (Poisson kind only)
# ---------------------------------------------------------------------------

_JUMP_MEAN_FACTOR = math.exp(-0.5) - 1.0  # relative mean of a jump, = -1/c
_JUMP_VAR_FACTOR = -math.expm1(-1.0)  # 1 - e^{-1}


def _require_poisson(family: SubordinatorFamily) -> None:
    require_calibrated(family)
    if family.kind != POISSON:
        raise FamilyError("event-driven simulation is exact for the poisson kind only")


def first_jump_times(family: SubordinatorFamily, s0: float, stream) -> np.ndarray:
    """Exact draws of the first jump time after s0 (power-law survival)."""
    _require_poisson(family)
    if s0 <= 0:
        raise DomainError("s0 must be > 0")
    bundle = stream.bundle if isinstance(stream, RandomStream) else stream
    u = bundle.uniforms(1)[0]
    t = s0 * u ** (-2.0 / family.c)
    return float(t[0]) if isinstance(stream, RandomStream) else t


def simulate_event(
    family: SubordinatorFamily,
    s0: float,
    x0: float,
    horizon: float,
    stream: RandomStream,
) -> EventPath:
    """Simulate one event-driven path from (s0, x0) up to the horizon.

    Per candidate jump one block supplies both the waiting-time uniform
    (open interval, so the next jump is strictly after the current time)
    and the jump-size normal; the block of the first candidate beyond the
    horizon is consumed as well, keeping lane-for-lane agreement with
    :func:`simulate_event_terminals`.
    """
    _require_poisson(family)
    if s0 <= 0:
        raise DomainError("s0 must be > 0")
    if horizon <= s0:
        raise DomainError("horizon must exceed s0")
    bundle = stream.bundle
    c = family.c
    t, x = float(s0), float(x0)
    jt, pre, post = [], [], []
    while True:
        uu = bundle.uniforms(2)
        # numpy's pow, not float.__pow__: keeps lane-exact agreement with
        # the vectorised simulator (libm pow can differ in the last ulp)
        big_t = t * float((uu[0] ** (-2.0 / c))[0])
        if big_t > horizon:
            break
        x_pre = x * math.sqrt(big_t / t)
        z = _JUMP_MEAN_FACTOR * x_pre + math.sqrt(
            big_t * _JUMP_VAR_FACTOR
        ) * float(ndtri(uu[1, 0]))
        jt.append(big_t)
        pre.append(x_pre)
        post.append(x_pre + z)
        t, x = big_t, x_pre + z
    return EventPath(
        start_time=s0,
        start_value=x0,
        horizon=horizon,
        jump_times=np.array(jt),
        pre_values=np.array(pre),
        post_values=np.array(post),
        terminal_value=x * math.sqrt(horizon / t),
    )


def simulate_event_terminals(
    family: SubordinatorFamily,
    s0: float,
    x0,
    horizon: float,
    bundle: StreamBundle,
) -> np.ndarray:
    """Terminal values at the horizon for one event-driven path per lane."""
    _require_poisson(family)
    if s0 <= 0:
        raise DomainError("s0 must be > 0")
    if horizon <= s0:
        raise DomainError("horizon must exceed s0")
    c = family.c
    n = len(bundle)
    t = np.full(n, float(s0))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    live = np.ones(n, dtype=bool)
    while np.any(live):
        idx = np.nonzero(live)[0]
        uu = bundle.uniforms(2, idx)
        big_t = t[idx] * uu[0] ** (-2.0 / c)
        jumped = big_t <= horizon
        ji = idx[jumped]
        if ji.size:
            tj = big_t[jumped]
            x_pre = x[ji] * np.sqrt(tj / t[ji])
            z = _JUMP_MEAN_FACTOR * x_pre + np.sqrt(
                tj * _JUMP_VAR_FACTOR
            ) * ndtri(uu[1][jumped])
            x[ji] = x_pre + z
            t[ji] = tj
        live[idx[~jumped]] = False
    return x * np.sqrt(horizon / t)


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def write_grid_csv(path, times, values) -> None:
    """Rows ``path_id,time,value``; repr formatting for exact round-trips."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    times = np.asarray(times, dtype=float)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("path_id,time,value\n")
        for i in range(values.shape[0]):
            fh.write(
                "\n".join(
                    f"{i},{float(t)!r},{float(v)!r}"
                    for t, v in zip(times, values[i])
                )
            )
            fh.write("\n")


def write_event_csv(path, paths: list[EventPath]) -> None:
    """Rows ``path_id,event_index,time,pre_value,post_value`` (jumps only)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("path_id,event_index,time,pre_value,post_value\n")
        for i, p in enumerate(paths):
            for j, (t, pre, post) in enumerate(p.jumps):
                fh.write(f"{i},{j},{float(t)!r},{float(pre)!r},{float(post)!r}\n")
