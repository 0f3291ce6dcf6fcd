"""Transition-law evaluation: atom plus absolutely continuous density.

For a step from (s, x) to t > s with scale ``sigma = sqrt(t/s)``, the
transition law is a mixture over the mixing variable R in [0, 1]::

    P(dy) = gamma(sigma) * delta_{sigma x}(dy)
            + E[ phi(sigma sqrt(R) x, t (1 - R), y); R < 1 ] dy,

and the step from s = 0 is exactly Gaussian.  Evaluation strategy per kind:

- *poisson*: R = exp(-N) with N Poisson, so the law is an exact discrete
  mixture of Gaussians truncated when the residual tail mass drops below
  1e-12 (no quadrature error at all);
- *gamma*: the mixing density is integrated by adaptive Gauss-Kronrod
  panels; shapes below one are handled by the exact ``w = u**shape``
  substitution (see :func:`gaussmart.quadrature.gamma_expectation`);
- *compound*: no closed mixture exists, so densities and moments fall back
  to Monte Carlo over mixing draws with a reported standard error.

Densities returned everywhere are the absolutely continuous part only; the
atom (weight, location) is reported separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, QuadratureError
from .quadrature import gamma_expectation
from .sampler import sample_subordinator_increment, verify_bundle
from .semigroup import (
    GAMMA,
    POISSON,
    SubordinatorFamily,
    gamma_atom,
    require_calibrated,
)

#: mixture components are kept until the residual tail mass is below this
POISSON_TAIL = 1e-12

#: estimated quadrature error above this raises QuadratureError
MOMENT_ERROR_LIMIT = 1e-6

_MC_DRAWS = 20000


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid for kernel composition checks."""

    n_nodes: int = 2048
    half_width: float | None = None  # defaults to 6 * sqrt(final time)


@dataclass(frozen=True)
class KernelEval:
    """One evaluated transition law: atom plus a density evaluator."""

    atom_weight: float
    atom_location: float  # nan when the step starts at time 0
    density: Callable[[np.ndarray], np.ndarray]
    quadrature: dict


def _phi(mean, var, y):
    """Gaussian density, broadcasting over all arguments."""
    return np.exp(-0.5 * (y - mean) ** 2 / var) / np.sqrt(2.0 * math.pi * var)


def _gauss_moment(mean, var, k: int):
    """E[Y^k] for Y ~ N(mean, var) via m_j = mean m_{j-1} + (j-1) var m_{j-2}."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    m_prev = np.ones(np.broadcast_shapes(mean.shape, var.shape))
    if k == 0:
        return m_prev
    m = mean * m_prev
    for j in range(2, k + 1):
        m, m_prev = mean * m + (j - 1) * var * m_prev, m
    return m


def _check_step(s: float, t: float, x: float) -> None:
    if s < 0:
        raise DomainError("s must be >= 0")
    if t <= s:
        raise DomainError("need t > s")
    if s == 0 and x != 0:
        # supported for testing only; the process itself starts at 0
        pass


def _poisson_mixture(family: SubordinatorFamily, s: float, t: float, x: float):
    """Exact Gaussian-mixture decomposition for the poisson kind.

    Returns (atom_weight, atom_location, weights, means, variances, tail).
    Component j >= 1 corresponds to j unit jumps of the subordinator:
    weight Poisson(c ln sigma) at j, mean sigma e^{-j/2} x, variance
    t (1 - e^{-j}).
    """
    sigma = math.sqrt(t / s)
    mean_jumps = family.c * math.log(sigma)
    atom = math.exp(-mean_jumps)
    weights, means, variances = [], [], []
    p = atom
    cumulative = atom
    j = 0
    while 1.0 - cumulative > POISSON_TAIL:
        j += 1
        p *= mean_jumps / j
        cumulative += p
        weights.append(p)
        means.append(sigma * math.exp(-0.5 * j) * x)
        variances.append(t * -math.expm1(-j))
    return (
        atom,
        sigma * x,
        np.array(weights),
        np.array(means),
        np.array(variances),
        max(1.0 - cumulative, 0.0),
    )


def kernel_eval(
    family: SubordinatorFamily,
    s: float,
    t: float,
    x: float,
    mc_draws: int = _MC_DRAWS,
    mc_seed: int = 0,
) -> KernelEval:
    """Build the transition law of the step (s, x) -> t as a KernelEval."""
    _check_step(s, t, x)
    if s == 0.0:
        def density(y):
            return _phi(x, t, np.asarray(y, dtype=float))

        return KernelEval(0.0, math.nan, density, {"method": "exact-gaussian"})

    require_calibrated(family)
    sigma = math.sqrt(t / s)
    if family.kind == POISSON:
        atom, loc, w, mu, var, tail = _poisson_mixture(family, s, t, x)

        def density(y):
            y = np.asarray(y, dtype=float)
            return _phi(mu, var, y[..., None]) @ w

        meta = {"method": "poisson-mixture", "components": int(w.size), "tail": tail}
        return KernelEval(atom, loc, density, meta)

    if family.kind == GAMMA:
        alpha = family.a * math.log(sigma)
        abs_tol = 1e-13 / math.sqrt(t)

        def density(y):
            y = np.atleast_1d(np.asarray(y, dtype=float))

            def g(u):
                mean = sigma * np.exp(-0.5 * u) * x
                var = t * -np.expm1(-u)
                return _phi(mean, var, y[:, None])

            val, _ = gamma_expectation(
                alpha, family.b, g, rel_tol=1e-8, abs_tol=abs_tol, max_panels=4096
            )
            return val

        meta = {
            "method": "gamma-quadrature",
            "shape": alpha,
            "rel_tol": 1e-8,
            "abs_tol": abs_tol,
        }
        return KernelEval(0.0, sigma * x, density, meta)

    # compound: Monte Carlo over mixing draws (reported standard error)
    bundle = verify_bundle(mc_seed, mc_draws)
    u_draws = sample_subordinator_increment(family, sigma, bundle)
    ac = u_draws > 0.0
    r = np.exp(-u_draws[ac])
    mu = sigma * np.sqrt(r) * x
    var = t * -np.expm1(-u_draws[ac])
    atom = gamma_atom(family, sigma)

    def density(y):
        y = np.asarray(y, dtype=float)
        vals = _phi(mu, var, y[..., None])
        return vals.sum(axis=-1) / mc_draws

    meta = {"method": "monte-carlo", "draws": mc_draws, "seed": mc_seed}
    return KernelEval(atom, sigma * x, density, meta)


def transition_density(family: SubordinatorFamily, s: float, t: float, x: float, y):
    """(atom_weight, atom_location, density at y) for the step (s, x) -> t.

    The density is that of the absolutely continuous part; the atom at
    ``sigma x`` is reported through the first two entries.
    """
    ev = kernel_eval(family, s, t, x)
    y_arr = np.asarray(y, dtype=float)
    dens = ev.density(y_arr if y_arr.ndim else y_arr[None])
    if y_arr.ndim == 0:
        dens = float(np.asarray(dens).reshape(-1)[0])
    return ev.atom_weight, ev.atom_location, dens


def kernel_moment(
    family: SubordinatorFamily,
    s: float,
    t: float,
    x: float,
    k: int,
    mc_draws: int = _MC_DRAWS,
    mc_seed: int = 0,
) -> float:
    """k-th moment of the full transition law (atom included), k in 0..4."""
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= 4:
        raise DomainError("moment order k must be an integer in 0..4")
    _check_step(s, t, x)
    if s == 0.0:
        return float(_gauss_moment(x, t, k))

    require_calibrated(family)
    sigma = math.sqrt(t / s)
    if family.kind == POISSON:
        atom, loc, w, mu, var, tail = _poisson_mixture(family, s, t, x)
        total = atom * loc**k + float(w @ _gauss_moment(mu, var, k))
        # truncated tail components are bounded by the atom location scale
        err = tail * max(1.0, abs(loc)) ** k
        if err > MOMENT_ERROR_LIMIT:
            raise QuadratureError(
                "mixture truncation too coarse", estimate=total, error_bound=err
            )
        return total

    if family.kind == GAMMA:
        alpha = family.a * math.log(sigma)

        def g(u):
            mean = sigma * np.exp(-0.5 * u) * x
            var = t * -np.expm1(-u)
            return _gauss_moment(mean, var, k)

        val, err = gamma_expectation(
            alpha, family.b, g, rel_tol=1e-10, abs_tol=1e-12, max_panels=4096
        )
        if float(np.max(err)) > MOMENT_ERROR_LIMIT:
            raise QuadratureError(
                "kernel moment quadrature above error limit",
                estimate=float(val),
                error_bound=float(np.max(err)),
            )
        return float(val)

    # compound: Monte Carlo with exact atom term
    bundle = verify_bundle(mc_seed, mc_draws)
    u_draws = sample_subordinator_increment(family, sigma, bundle)
    ac = u_draws > 0.0
    r = np.exp(-u_draws[ac])
    contrib = _gauss_moment(sigma * np.sqrt(r) * x, t * -np.expm1(-u_draws[ac]), k)
    atom = gamma_atom(family, sigma)
    return atom * (sigma * x) ** k + float(contrib.sum()) / mc_draws


def _density_matrix(family, s: float, t: float, ygrid, zgrid, chunk: int = 64):
    """Matrix D[i, j] = AC density of the step (s, y_i) -> t evaluated at z_j."""
    require_calibrated(family)
    ny, nz = ygrid.size, zgrid.size
    sigma = math.sqrt(t / s)
    if family.kind == POISSON:
        _, _, w, _, var, _ = _poisson_mixture(family, s, t, 1.0)
        scale = sigma * np.exp(-0.5 * np.arange(1, w.size + 1))
        out = np.zeros((ny, nz))
        for j in range(w.size):
            out += w[j] * _phi(scale[j] * ygrid[:, None], var[j], zgrid[None, :])
        return out
    out = np.empty((ny, nz))
    for lo in range(0, ny, chunk):
        hi = min(lo + chunk, ny)
        block = ygrid[lo:hi]
        if family.kind == GAMMA:
            alpha = family.a * math.log(sigma)

            def g(u):
                mean = sigma * np.exp(-0.5 * u) * block[:, None, None]
                var = t * -np.expm1(-u)
                return _phi(mean, var, zgrid[None, :, None])

            val, _ = gamma_expectation(
                alpha, family.b, g, rel_tol=1e-8, abs_tol=1e-12, max_panels=4096
            )
            out[lo:hi] = val
        else:
            for i in range(lo, hi):
                out[i] = kernel_eval(family, s, t, float(ygrid[i])).density(zgrid)
    return out


def ck_residual(
    family: SubordinatorFamily,
    s: float,
    t: float,
    u: float,
    x: float,
    grid: GridSpec = GridSpec(),
):
    """Numerically compose P_{s,t} with P_{t,u} and compare against P_{s,u}.

    Returns ``(sup_residual, atom_residual)``: the sup-norm difference of
    the composed and direct absolutely continuous densities on the grid,
    and the mismatch of the composed atom weight.  The composition handles
    all four cross terms: atom*atom stays an atom, atom*density and
    density*atom rescale, density*density is integrated by Simpson's rule
    on the shared y grid.
    """
    if not 0.0 <= s < t < u:
        raise DomainError("need 0 <= s < t < u")
    if s == 0.0 and x != 0.0:
        raise DomainError("the s = 0 composition starts from x = 0")
    half = grid.half_width if grid.half_width is not None else 6.0 * math.sqrt(u)
    ygrid = np.linspace(-half, half, grid.n_nodes)
    zgrid = ygrid.copy()
    tau = math.sqrt(u / t)

    first = kernel_eval(family, s, t, x)
    f1 = first.density(ygrid)
    f2 = _density_matrix(family, t, u, ygrid, zgrid)
    direct = kernel_eval(family, s, u, x).density(zgrid)

    composed = simpson(f1[:, None] * f2, x=ygrid, axis=0)
    if s > 0.0:
        g_sigma = gamma_atom(family, math.sqrt(t / s))
        g_tau = gamma_atom(family, tau)
        g_both = gamma_atom(family, math.sqrt(u / s))
        if g_sigma > 0.0:
            composed = composed + g_sigma * kernel_eval(
                family, t, u, first.atom_location
            ).density(zgrid)
        if g_tau > 0.0:
            composed = composed + g_tau * first.density(zgrid / tau) / tau
        atom_residual = abs(g_sigma * g_tau - g_both)
    else:
        g_tau = gamma_atom(family, tau)
        if g_tau > 0.0:
            composed = composed + g_tau * first.density(zgrid / tau) / tau
        atom_residual = 0.0

    sup_residual = float(np.max(np.abs(composed - direct)))
    return sup_residual, atom_residual
