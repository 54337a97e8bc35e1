"""Neumann heat kernel on [-1, 1] by the method of images.

The kernel of the semigroup generated by half the Laplacian with reflecting
ends is the Gaussian summed over the preimages of ``r'`` under the 4-periodic
fold ``psi`` of the real line onto [-1, 1]:

    P_t(r, r') = sum_k G_t(r, r' + 4k) + G_t(r, 2 - r' + 4k),

and at ``r' = +-1`` (where the two image families coincide) each image is
counted twice.
"""

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfcx

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_EDGE_TOL = 1e-12


def reflect(x):
    """The fold psi: identity on [-1, 1], ``2 - x`` on [1, 3], period 4."""
    y = np.mod(np.asarray(x, dtype=float) + 1.0, 4.0) - 1.0
    out = np.where(y <= 1.0, y, 2.0 - y)
    return float(out) if out.ndim == 0 else out


def gauss(t, r, rp):
    if np.any(np.asarray(t) <= 0):
        raise ValueError("gauss needs t > 0")
    d = np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)
    return np.exp(-d * d / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


@dataclass(frozen=True)
class KernelConfig:
    """Image truncation and quadrature settings.

    ``n_images`` fixes the image index range to ``|k| <= n_images``; when it
    is None the range adapts to t so that every image within
    ``n_sd * sqrt(t) + 2`` of the interval is kept, with ``n_sd`` at least 8
    and large enough that the Gaussian tail beyond it is below ``tail_tol``.
    ``grid`` optionally pins the number of quadrature intervals.
    """

    n_images: Optional[int] = None
    tail_tol: float = 1e-14
    grid: Optional[int] = None

    def __post_init__(self):
        if self.n_images is not None and self.n_images < 1:
            raise ValueError("n_images must be >= 1")
        if not self.tail_tol > 0:
            raise ValueError("tail_tol must be > 0")
        if self.grid is not None and self.grid < 2:
            raise ValueError("grid must be >= 2")

    def image_indices(self, t_max: float) -> np.ndarray:
        if self.n_images is not None:
            kmax = self.n_images
        else:
            n_sd = max(8.0, math.sqrt(2.0 * math.log(1.0 / self.tail_tol)))
            reach = n_sd * math.sqrt(t_max) + 2.0
            kmax = max(2, math.ceil((reach + 2.0) / 4.0))
        return np.arange(-kmax, kmax + 1, dtype=float)


DEFAULT_KERNEL = KernelConfig()


def _check_unit(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + _EDGE_TOL):
        raise ValueError(f"{name} must lie in [-1, 1]")
    return np.clip(x, -1.0, 1.0)


def kernel(t, r, rp, cfg: KernelConfig = DEFAULT_KERNEL):
    """P_t(r, r'); broadcasts over ``r`` and ``rp``."""
    if t <= 0:
        raise ValueError("kernel needs t > 0")
    r = _check_unit("r", r)
    rp = _check_unit("rp", rp)
    shifts = 4.0 * cfg.image_indices(t)
    r_, rp_ = np.broadcast_arrays(r, rp)
    r_ = r_[..., None]
    rp_ = rp_[..., None]
    direct = rp_ + shifts
    mirrored = 2.0 - rp_ + shifts
    val = (np.exp(-((r_ - direct) ** 2) / (2 * t)) + np.exp(-((r_ - mirrored) ** 2) / (2 * t))).sum(-1)
    val /= _SQRT_2PI * math.sqrt(t)
    edge = np.abs(np.abs(rp_[..., 0]) - 1.0) == 0.0
    if np.any(edge):
        val = np.where(edge, boundary_kernel(t, r_[..., 0], np.sign(rp_[..., 0]), cfg), val)
    return val[()] if val.ndim == 0 else val


def boundary_kernel(t, r, side, cfg: KernelConfig = DEFAULT_KERNEL):
    """P_t(r, side) for side = +1 or -1: twice the Gaussian at each image."""
    if t <= 0:
        raise ValueError("kernel needs t > 0")
    r = np.asarray(r, dtype=float)[..., None]
    side = np.asarray(side, dtype=float)[..., None]
    images = side + 4.0 * cfg.image_indices(t)
    val = 2.0 * np.exp(-((r - images) ** 2) / (2 * t)).sum(-1) / (_SQRT_2PI * math.sqrt(t))
    return val[()] if val.ndim == 0 else val


def _gauss_time_integral(s, d):
    """int_0^s G_u(0, d) du in closed form, stable for large d/sqrt(s)."""
    s = np.asarray(s, dtype=float)
    d = np.abs(np.asarray(d, dtype=float))
    out = np.zeros(np.broadcast(s, d).shape)
    pos = np.broadcast_to(s > 0, out.shape)
    s_b = np.broadcast_to(s, out.shape)[pos]
    d_b = np.broadcast_to(d, out.shape)[pos]
    z = d_b / np.sqrt(2.0 * s_b)
    out[pos] = np.exp(-z * z) * (np.sqrt(2.0 * s_b / np.pi) - d_b * erfcx(z))
    return out


def boundary_kernel_integral(r, s, side, cfg: KernelConfig = DEFAULT_KERNEL):
    """Phi(r, s) = int_0^s P_u(r, side) du, shape ``(len(r), len(s))``.

    This is the exact product-integration weight for the integrable
    1/sqrt(u) singularity of the boundary kernel at u = 0.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0):
        raise ValueError("integration times must be >= 0")
    images = side + 4.0 * cfg.image_indices(float(s.max()) if s.size else 0.0)
    out = np.zeros((r.shape[0], s.shape[0]))
    for c in images:
        out += _gauss_time_integral(s[None, :], (r - c)[:, None])
    return 2.0 * out


@dataclass
class GridFunction:
    """Values at the M+1 uniform nodes r_i = -1 + 2i/M."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.shape[0] < 3:
            raise ValueError("GridFunction needs at least 3 nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridFunction values must be finite")

    @property
    def M(self) -> int:
        return self.values.shape[0] - 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.M + 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.M + 1, 2.0 / self.M)
        w[0] = w[-1] = 1.0 / self.M
        return w

    @classmethod
    def from_function(cls, f, M: int) -> "GridFunction":
        nodes = np.linspace(-1.0, 1.0, M + 1)
        return cls(np.asarray(f(nodes), dtype=float) * np.ones(M + 1))

    @classmethod
    def constant(cls, c: float, M: int) -> "GridFunction":
        return cls(np.full(M + 1, float(c)))

    def integral(self) -> float:
        return float(self.weights @ self.values)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "value"])
            for r, v in zip(self.nodes, self.values):
                writer.writerow([repr(float(r)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        r = np.array([float(row["r"]) for row in rows])
        values = np.array([float(row["value"]) for row in rows])
        out = cls(values)
        if not np.allclose(r, out.nodes, atol=1e-12):
            raise ValueError(f"{path}: nodes are not the uniform grid on [-1, 1]")
        return out


def uniform_kernel_matrix(t, M: int, cfg: KernelConfig = DEFAULT_KERNEL) -> np.ndarray:
    """P_t(r_i, r_k) on the uniform grid with M intervals.

    On this grid r_i - r_k depends only on i - k and r_i + r_k only on i + k,
    so the direct images give a Toeplitz part and the mirrored images a
    Hankel part. Each needs only 2M + 1 Gaussian evaluations.
    """
    if t <= 0:
        raise ValueError("kernel needs t > 0")
    dx = 2.0 / M
    shifts = 4.0 * cfg.image_indices(t)
    norm = _SQRT_2PI * math.sqrt(t)
    diff = dx * np.arange(-M, M + 1, dtype=float)
    toeplitz = np.exp(-((diff[:, None] - shifts) ** 2) / (2 * t)).sum(-1) / norm
    # r_i - (2 - r_k + 4k) = (i + k) dx - 4 - 4k
    hsum = dx * np.arange(0, 2 * M + 1, dtype=float) - 4.0
    hankel = np.exp(-((hsum[:, None] - shifts) ** 2) / (2 * t)).sum(-1) / norm
    i = np.arange(M + 1)
    mat = toeplitz[i[:, None] - i[None, :] + M] + hankel[i[:, None] + i[None, :]]
    nodes = np.linspace(-1.0, 1.0, M + 1)
    mat[:, 0] = boundary_kernel(t, nodes, -1.0, cfg)
    mat[:, -1] = boundary_kernel(t, nodes, 1.0, cfg)
    return mat


def semigroup_matrix(t, M: int, cfg: KernelConfig = DEFAULT_KERNEL) -> np.ndarray:
    """Quadrature matrix Q with (Q g)_i = sum_k P_t(r_i, r_k) w_k g_k."""
    w = np.full(M + 1, 2.0 / M)
    w[0] = w[-1] = 1.0 / M
    return uniform_kernel_matrix(t, M, cfg) * w[None, :]


def apply_semigroup(t, g: GridFunction, cfg: KernelConfig = DEFAULT_KERNEL) -> GridFunction:
    """(P_t g)(r_i) at every node by the trapezoid rule."""
    if t <= 0:
        raise ValueError("apply_semigroup needs t > 0")
    if cfg.grid is not None and cfg.grid != g.M:
        raise ValueError(f"grid mismatch: config expects M={cfg.grid}, function has M={g.M}")
    return GridFunction(semigroup_matrix(t, g.M, cfg) @ g.values)
