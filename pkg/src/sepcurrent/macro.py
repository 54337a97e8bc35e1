"""Macroscopic equation: stationary solution, Volterra traces, FD solver, relaxation.

The density solves d rho/dt = (1/2) d^2 rho/dr^2 on [-1, 1] with nonlinear
flux conditions

    d rho/dr (1, t)  = j (1 - u_+(t)^K),
    d rho/dr (-1, t) = j (1 - (1 - u_-(t))^K),

where u_+- are the boundary values. Two independent discretisations are
provided: the boundary-trace Volterra system with profile reconstruction,
and a Crank-Nicolson finite-difference scheme.
"""

import csv
import json
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, HorizonError, MonotonicityError, NonConvergence, RangeViolation
from .heat_kernel import (DEFAULT_KERNEL, GridFunction, KernelConfig, boundary_kernel_integral,
                          semigroup_matrix)
from .profile import DensityProfile


def _check_jk(j, K, allow_zero=False):
    if not (j > 0 or (allow_zero and j == 0)) or not math.isfinite(j):
        raise ConfigError(f"j must be {'>= 0' if allow_zero else '> 0'}, got {j}")
    if int(K) != K or K < 1:
        raise ConfigError(f"K must be an integer >= 1, got {K}")
    return float(j), int(K)


def flux_plus(u, j, K):
    """d rho/dr at r = 1 given the boundary value u = rho(1)."""
    return j * (1.0 - np.asarray(u) ** K)


def flux_minus(u, j, K):
    """d rho/dr at r = -1 given the boundary value u = rho(-1)."""
    return j * (1.0 - (1.0 - np.asarray(u)) ** K)


# --- stationary solution ------------------------------------------------------

@dataclass(frozen=True)
class StationarySolution:
    alpha: float
    J: float
    j: float
    K: int
    residual: float

    def profile(self, r):
        return self.J * np.asarray(r, dtype=float) + 0.5

    @property
    def current(self) -> float:
        """Signed macroscopic current -(1/2) d rho*/dr."""
        return -0.5 * self.J

    def grid_function(self, M: int) -> GridFunction:
        return GridFunction.from_function(self.profile, M)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "J": self.J, "j": self.j, "K": self.K,
                "residual": self.residual}

    def to_json(self, path=None, **extra):
        text = json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def solve_alpha(j: float, K: int, tol: float = 1e-300) -> StationarySolution:
    """Root of alpha + j alpha^K = j + 1/2 in [1/2, 1] by bisection.

    Bisection stops at ``tol`` or when the midpoint no longer splits the
    bracket, whichever comes first; the default runs to adjacent floats.
    The endpoint with the smaller residual is returned.
    """
    j, K = _check_jk(j, K)
    if not tol > 0:
        raise ConfigError("tol must be > 0")

    def f(a):
        return a + j * a ** K - j - 0.5

    lo, hi = 0.5, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    alpha = lo if abs(f(lo)) <= abs(f(hi)) else hi
    return StationarySolution(alpha=alpha, J=j * (1.0 - alpha ** K), j=j, K=K,
                              residual=abs(f(alpha)))


# --- Volterra boundary system ---------------------------------------------------

@dataclass
class BoundaryTraces:
    """u_+(t_n) and u_-(t_n) at t_n = n h, plus the data needed to reconstruct."""

    h: float
    u_plus: np.ndarray
    u_minus: np.ndarray
    j: float
    K: int
    rho0: Optional[GridFunction] = None
    kernel_cfg: KernelConfig = DEFAULT_KERNEL

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.u_plus.shape[0])

    @property
    def horizon(self) -> float:
        return self.h * (self.u_plus.shape[0] - 1)

    def interval_fluxes(self):
        """Interval averages of the two flux nonlinearities (divided by j)."""
        fp = 1.0 - self.u_plus ** self.K
        fm = 1.0 - (1.0 - self.u_minus) ** self.K
        return 0.5 * (fp[1:] + fp[:-1]), 0.5 * (fm[1:] + fm[:-1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "u_plus", "u_minus"])
            for row in zip(self.times, self.u_plus, self.u_minus):
                writer.writerow([repr(float(v)) for v in row])


def _check_initial(rho0: GridFunction):
    if np.any(rho0.values < 0) or np.any(rho0.values > 1):
        raise ConfigError("initial profile must take values in [0, 1]")


def _n_steps(t_end, step):
    if not step > 0:
        raise ConfigError("time step must be > 0")
    if not t_end > 0:
        raise ConfigError("t_end must be > 0")
    n = round(t_end / step)
    if abs(n * step - t_end) > 1e-9 * max(1.0, t_end):
        n = math.ceil(t_end / step)
    return int(n)


@functools.lru_cache(maxsize=8)
def _trace_weights(h, n, cfg):
    times = h * np.arange(n + 1)
    w_same = np.diff(boundary_kernel_integral([1.0], times, 1.0, cfg)[0])
    w_cross = np.diff(boundary_kernel_integral([1.0], times, -1.0, cfg)[0])
    return w_same, w_cross


@functools.lru_cache(maxsize=4)
def _profile_weights(M, h, n, cfg):
    """Interval weights int P_s(r_i, 1) ds for every node, shape (M + 1, n)."""
    s = h * np.arange(n + 1)
    nodes = np.linspace(-1.0, 1.0, M + 1)
    w = np.diff(boundary_kernel_integral(nodes, s, 1.0, cfg), axis=1)
    w.flags.writeable = False
    return w


def _free_boundary_terms(rho0: GridFunction, times, cfg, chunk=256):
    """(P_t rho0)(+1) and (P_t rho0)(-1) at each time."""
    plus = np.empty(len(times))
    minus = np.empty(len(times))
    plus[0], minus[0] = rho0.values[-1], rho0.values[0]
    nodes, wv = rho0.nodes, rho0.weights * rho0.values
    images = 4.0 * cfg.image_indices(float(times[-1]))
    for start in range(1, len(times), chunk):
        t = np.asarray(times[start:start + chunk])[:, None, None]
        norm = 2.0 / np.sqrt(2.0 * np.pi * t[:, :, 0])
        for side, out in ((1.0, plus), (-1.0, minus)):
            d = nodes[None, :, None] - side - images[None, None, :]
            row = np.exp(-d * d / (2.0 * t)).sum(-1) * norm
            out[start:start + chunk] = row @ wv
    return plus, minus


def solve_boundary_traces(rho0: GridFunction, j: float, K: int, t_end: float, h: float,
                          kernel_cfg: KernelConfig = DEFAULT_KERNEL,
                          sweeps: int = 1) -> BoundaryTraces:
    """March the Volterra system for the boundary values.

    Over each step the nonlinearity is taken constant at the average of its
    two endpoint values, and integrated exactly against the boundary kernel,
    which removes the 1/sqrt(s) singularity at s = 0. The unknown endpoint
    is predicted from the previous step and corrected by ``sweeps``
    fixed-point passes.
    """
    j, K = _check_jk(j, K, allow_zero=True)
    _check_initial(rho0)
    n = _n_steps(t_end, h)
    times = h * np.arange(n + 1)

    # weights of interval m = 1..n (s in [(m-1)h, mh]); P_s(-1,-1) = P_s(1,1)
    w_same, w_cross = _trace_weights(float(h), n, kernel_cfg)

    # contraction factor of the corrector: |d(Fbar)/du| <= K/2
    q = 0.5 * j * (w_same[0] + w_cross[0]) * 0.5 * K
    if q >= 1.0:
        raise NonConvergence(f"fixed-point correction does not contract (factor {q:.3g}); reduce h")

    free_p, free_m = _free_boundary_terms(rho0, times, kernel_cfg)
    up = np.empty(n + 1)
    um = np.empty(n + 1)
    fp = np.empty(n + 1)
    fm = np.empty(n + 1)
    up[0], um[0] = free_p[0], free_m[0]
    fp[0] = 1.0 - up[0] ** K
    fm[0] = 1.0 - (1.0 - um[0]) ** K
    fbar_p = np.empty(n)
    fbar_m = np.empty(n)
    half_j = 0.5 * j
    a1, b1 = w_same[0], w_cross[0]
    slack = 10.0 * h
    for k in range(1, n + 1):
        # history: intervals m = 2..k pair with fbar[k - m]
        if k > 1:
            ws = w_same[k - 1:0:-1]
            wc = w_cross[k - 1:0:-1]
            hp, hm = fbar_p[:k - 1], fbar_m[:k - 1]
            hist_p = ws @ hp - wc @ hm
            hist_m = wc @ hp - ws @ hm
        else:
            hist_p = hist_m = 0.0
        base_p = free_p[k] + half_j * hist_p
        base_m = free_m[k] + half_j * hist_m
        fp_k, fm_k = fp[k - 1], fm[k - 1]
        for _ in range(sweeps + 1):
            bp = 0.5 * (fp[k - 1] + fp_k)
            bm = 0.5 * (fm[k - 1] + fm_k)
            u_p = base_p + half_j * (a1 * bp - b1 * bm)
            u_m = base_m + half_j * (b1 * bp - a1 * bm)
            fp_k = 1.0 - u_p ** K
            fm_k = 1.0 - (1.0 - u_m) ** K
        if not (-slack <= u_p <= 1 + slack and -slack <= u_m <= 1 + slack):
            raise RangeViolation(f"boundary trace left [0, 1] at t={times[k]:.6g} "
                                 f"(u+={u_p:.6g}, u-={u_m:.6g})")
        up[k], um[k] = u_p, u_m
        fp[k], fm[k] = fp_k, fm_k
        fbar_p[k - 1] = 0.5 * (fp[k - 1] + fp_k)
        fbar_m[k - 1] = 0.5 * (fm[k - 1] + fm_k)
    return BoundaryTraces(h=float(h), u_plus=up, u_minus=um, j=j, K=K, rho0=rho0,
                          kernel_cfg=kernel_cfg)


def reconstruct_profile(rho0: GridFunction, traces: BoundaryTraces, t,
                        grid: Optional[int] = None,
                        kernel_cfg: Optional[KernelConfig] = None):
    """Density at time(s) ``t`` from the integral representation.

    ``t`` is rounded to the trace time grid. A scalar ``t`` gives one
    :class:`DensityProfile`; a sequence gives a list. ``grid`` must match the
    initial profile's grid (the free term is a quadrature on it).
    """
    cfg = kernel_cfg if kernel_cfg is not None else traces.kernel_cfg
    if grid is not None and grid != rho0.M:
        raise ConfigError(f"grid mismatch: requested M={grid}, initial profile has M={rho0.M}")
    scalar = np.ndim(t) == 0
    t_list = np.atleast_1d(np.asarray(t, dtype=float))
    h = traces.h
    idx = np.rint(t_list / h).astype(np.int64)
    if np.any(t_list < 0):
        raise ValueError("t must be >= 0")
    if np.any(idx * h > traces.horizon + 1e-12) or np.any(idx >= traces.u_plus.shape[0]):
        raise HorizonError(f"t={t_list.max():.6g} beyond trace horizon {traces.horizon:.6g}")
    nodes = rho0.nodes
    n_max = int(idx.max())
    fbar_p, fbar_m = traces.interval_fluxes()
    if n_max > 0:
        w_plus = _profile_weights(rho0.M, float(h), n_max, cfg)
        w_minus = w_plus[::-1]  # P_s(r, -1) = P_s(-r, 1) on the symmetric grid
    half_j = 0.5 * traces.j
    out = []
    for tn, n in zip(idx * h, idx):
        if n == 0:
            values = rho0.values.copy()
        else:
            free = semigroup_matrix(tn, rho0.M, cfg) @ rho0.values
            src = w_plus[:, :n] @ fbar_p[n - 1::-1] - w_minus[:, :n] @ fbar_m[n - 1::-1]
            values = free + half_j * src
            values[-1] = traces.u_plus[n]
            values[0] = traces.u_minus[n]
        out.append(DensityProfile(r=nodes, values=values, t=float(tn), source="volterra"))
    return out[0] if scalar else out


def volterra_solve(rho0: GridFunction, j: float, K: int, times: Sequence[float], h: float,
                   kernel_cfg: KernelConfig = DEFAULT_KERNEL):
    """Traces up to ``max(times)`` and the reconstructed profiles at ``times``."""
    t_max = float(np.max(times))
    traces = solve_boundary_traces(rho0, j, K, max(t_max, h), h, kernel_cfg)
    return traces, reconstruct_profile(rho0, traces, list(times), kernel_cfg=kernel_cfg)


# --- finite differences -----------------------------------------------------------

@dataclass
class FDTrajectory:
    """Crank-Nicolson snapshots at every step, with boundary fluxes."""

    times: np.ndarray
    r: np.ndarray
    values: np.ndarray          # shape (n_steps + 1, M + 1)
    flux_plus: np.ndarray       # d rho/dr at r = 1 used on each step
    flux_minus: np.ndarray
    dt: float
    j: float
    K: int

    def index(self, t) -> int:
        n = int(round(t / self.dt))
        if n < 0 or n >= self.times.shape[0]:
            raise HorizonError(f"t={t:.6g} outside the computed trajectory")
        return n

    def at(self, t) -> DensityProfile:
        n = self.index(t)
        return DensityProfile(r=self.r, values=self.values[n].copy(), t=float(self.times[n]),
                              source="fd")

    def __iter__(self):
        for n in range(self.times.shape[0]):
            yield DensityProfile(r=self.r, values=self.values[n], t=float(self.times[n]),
                                 source="fd")

    def masses(self) -> np.ndarray:
        w = np.full(self.r.shape[0], self.r[1] - self.r[0])
        w[0] = w[-1] = 0.5 * w[0]
        return self.values @ w


def _fd_operator(M):
    """Banded form of (1/2) d^2/dr^2 with reflecting ghost nodes, scaled by dx^2."""
    upper = np.full(M + 1, 0.5)
    lower = np.full(M + 1, 0.5)
    diag = np.full(M + 1, -1.0)
    upper[1] = 1.0    # row 0: (2 rho_1 - 2 rho_0) / 2
    lower[M - 1] = 1.0  # row M: (2 rho_{M-1} - 2 rho_M) / 2
    return upper, diag, lower


def fd_solve(rho0: GridFunction, j: float, K: int, t_end: float, M: Optional[int] = None,
             dt: float = 5e-3, theta: float = 0.5, startup: int = 2) -> FDTrajectory:
    """Theta-scheme (Crank-Nicolson by default) with explicit boundary fluxes.

    The ghost node outside r = 1 is eliminated with the centred flux
    condition, which adds the source g_+/dx to the last row and -g_-/dx to
    the first, where g_+- are the fluxes at the current boundary values.
    The first ``startup`` steps are each replaced by two backward-Euler half
    steps to damp the Crank-Nicolson response to rough initial data.
    """
    j, K = _check_jk(j, K, allow_zero=True)
    _check_initial(rho0)
    if M is not None and M != rho0.M:
        rho0 = GridFunction(np.interp(np.linspace(-1, 1, M + 1), rho0.nodes, rho0.values))
    M = rho0.M
    dx = 2.0 / M
    if dt > dx + 1e-15:
        raise ConfigError(f"dt={dt} exceeds the step budget 2/M={dx}")
    if not 0.5 <= theta <= 1.0:
        raise ConfigError("theta must lie in [1/2, 1]")
    n = _n_steps(t_end, dt)
    up, dg, lo = _fd_operator(M)
    scale = 1.0 / (dx * dx)

    def lhs(step, th):
        ab = np.zeros((3, M + 1))
        ab[0, 1:] = -step * th * scale * up[1:]
        ab[1] = 1.0 - step * th * scale * dg
        ab[2, :-1] = -step * th * scale * lo[:-1]
        return ab

    def apply_l(v):
        out = dg * v
        out[:-1] += up[1:] * v[1:]
        out[1:] += lo[:-1] * v[:-1]
        return scale * out

    ab_main = lhs(dt, theta)
    ab_half = lhs(0.5 * dt, 1.0)
    values = np.empty((n + 1, M + 1))
    gp = np.empty(n)
    gm = np.empty(n)
    values[0] = rho0.values
    rho = rho0.values.copy()
    slack = 10.0 * dt
    for k in range(n):
        if k < startup:
            for sub in range(2):
                g_p = flux_plus(rho[-1], j, K)
                g_m = flux_minus(rho[0], j, K)
                rhs = rho.copy()
                rhs[-1] += 0.5 * dt * g_p / dx
                rhs[0] -= 0.5 * dt * g_m / dx
                rho = solve_banded((1, 1), ab_half, rhs)
                if sub == 0:
                    first = (g_p, g_m)
            # record the mean flux so the mass budget stays exact
            gp[k] = 0.5 * (first[0] + g_p)
            gm[k] = 0.5 * (first[1] + g_m)
        else:
            g_p = flux_plus(rho[-1], j, K)
            g_m = flux_minus(rho[0], j, K)
            rhs = rho + dt * (1.0 - theta) * apply_l(rho)
            rhs[-1] += dt * g_p / dx
            rhs[0] -= dt * g_m / dx
            rho = solve_banded((1, 1), ab_main, rhs)
            gp[k], gm[k] = g_p, g_m
        if rho.min() < -slack or rho.max() > 1 + slack:
            raise RangeViolation(f"FD density left [0, 1] at t={(k + 1) * dt:.6g}; "
                                 "the step is unstable")
        values[k + 1] = rho
    return FDTrajectory(times=dt * np.arange(n + 1), r=rho0.nodes, values=values,
                        flux_plus=gp, flux_minus=gm, dt=float(dt), j=j, K=K)


# --- relaxation -------------------------------------------------------------------

Sampler = Callable[[np.ndarray], tuple]


def volterra_sampler(j, K, M: int = 400, h: float = 1e-3,
                     kernel_cfg: KernelConfig = DEFAULT_KERNEL) -> Sampler:
    """Upper (rho0 = 1) and lower (rho0 = 0) profiles from the Volterra solver."""
    def sample(times):
        rows = []
        for c in (1.0, 0.0):
            _, profs = volterra_solve(GridFunction.constant(c, M), j, K, times, h, kernel_cfg)
            rows.append(np.array([p.values for p in profs]))
        return rows[0], rows[1]
    return sample


def fd_sampler(j, K, M: int = 400, dt: float = 1e-3) -> Sampler:
    def sample(times):
        t_max = float(np.max(times))
        rows = []
        for c in (1.0, 0.0):
            traj = fd_solve(GridFunction.constant(c, M), j, K, t_max, dt=dt)
            rows.append(np.array([traj.values[traj.index(t)] for t in times]))
        return rows[0], rows[1]
    return sample


@dataclass
class RelaxationFit:
    """Fit of log w(t) = log c' - c t on the tail window."""

    rate: float
    prefactor: float
    r_squared: float
    residual: float
    window: tuple
    times: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"rate": self.rate, "prefactor": self.prefactor, "r_squared": self.r_squared,
                "residual": self.residual, "window": list(self.window)}


def relaxation_fit(j: float, K: int, t_max: float, sampler: Optional[Sampler] = None,
                   sample_dt: float = 0.05, monotone_tol: float = 1e-6) -> RelaxationFit:
    """Fit the decay of w(t) = sup_r (rho_upper - rho_lower).

    ``prefactor`` is the smallest c' with w(t) <= c' exp(-c t) at every
    sampled time, so the reported envelope bounds the whole curve.
    """
    j, K = _check_jk(j, K)
    if not t_max > 0:
        raise ConfigError("t_max must be > 0")
    sampler = sampler if sampler is not None else volterra_sampler(j, K)
    times = sample_dt * np.arange(int(round(t_max / sample_dt)) + 1)
    upper, lower = sampler(times)
    w = np.max(np.asarray(upper) - np.asarray(lower), axis=1)
    rises = np.diff(w)
    if np.any(rises > monotone_tol):
        k = int(np.argmax(rises))
        raise MonotonicityError(f"w increased by {rises[k]:.3g} at t={times[k + 1]:.6g}")
    window = (0.5 * t_max, t_max)
    sel = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
    if np.any(w[sel] <= 0):
        raise NonConvergence("w reached zero inside the fit window; log fit undefined")
    logw = np.log(w[sel])
    slope, icpt = np.polyfit(times[sel], logw, 1)
    fitted = icpt + slope * times[sel]
    ss_res = float(np.sum((logw - fitted) ** 2))
    ss_tot = float(np.sum((logw - logw.mean()) ** 2))
    rate = -float(slope)
    return RelaxationFit(rate=rate, prefactor=float(np.max(w * np.exp(rate * times))),
                         r_squared=1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0,
                         residual=math.sqrt(ss_res / max(1, sel.sum())),
                         window=window, times=times, w=w)
