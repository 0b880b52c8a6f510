"""Structured linear operators on 2D images and their adjoints.

Conventions
-----------
* Images are 2D float arrays indexed ``x[i, j]`` with ``i`` the row (vertical)
  and ``j`` the column (horizontal). Flattening, when needed, is row-major.
* The TV forward differences ``diff_forward`` are periodic; the field has shape
  ``(2, m1, m2)`` with channel 0 horizontal and channel 1 vertical.
* Blur kernels have odd sizes; tap ``[c1, c2]`` with ``c = (n - 1) // 2`` is the
  zero shift, so ``(x * y)[i, j] = sum_{s,t} y[s + c1, t + c2] x[i - s, j - t]``
  with indices taken modulo the image size.
* The eight directional differences use zero ("natural") boundaries: an entry
  whose stencil leaves the image is 0.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IllPosedSystemError

__all__ = [
    "as_image",
    "diff_forward",
    "diff_adjoint",
    "dtd_eigenvalues",
    "kernel_otf",
    "circ_conv",
    "circ_conv_adjoint_image",
    "circ_conv_adjoint_kernel",
    "Convolution",
    "DIRECTIONS",
    "directional_grads",
    "directional_adjoint",
    "SamplingMask",
    "mask_apply",
    "random_mask",
    "solve_tv_x_system",
    "power_norm",
    "disk_kernel",
    "gaussian_kernel",
    "delta_kernel",
]


def as_image(x):
    """Validate a 2D finite image and return it as float64."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"expected a non-empty 2D image, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite entries")
    return x


def diff_forward(x):
    """Periodic forward differences; returns a ``(2, m1, m2)`` field."""
    x = np.asarray(x, dtype=float)
    return np.stack([np.roll(x, -1, axis=1) - x, np.roll(x, -1, axis=0) - x])


def diff_adjoint(p):
    p = np.asarray(p, dtype=float)
    return (np.roll(p[0], 1, axis=1) - p[0]) + (np.roll(p[1], 1, axis=0) - p[1])


def dtd_eigenvalues(shape):
    """Eigenvalues of ``D^T D`` in the 2D DFT basis (periodic boundary)."""
    m1, m2 = shape
    w1 = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(m1) / m1)
    w2 = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(m2) / m2)
    return w1[:, None] + w2[None, :]


def _check_kernel(k, shape):
    k = np.asarray(k, dtype=float)
    if k.ndim != 2:
        raise ValueError(f"kernel must be 2D, got shape {k.shape}")
    n1, n2 = k.shape
    if n1 % 2 == 0 or n2 % 2 == 0:
        raise ValueError(f"kernel sides must be odd, got {k.shape}")
    if n1 > shape[0] or n2 > shape[1]:
        raise ValueError(f"kernel {k.shape} larger than image {tuple(shape)}")
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel contains non-finite entries")
    return k


def kernel_otf(k, shape):
    """DFT of the kernel zero-padded to ``shape`` with its center at index (0, 0)."""
    k = _check_kernel(k, shape)
    n1, n2 = k.shape
    pad = np.zeros(shape)
    pad[:n1, :n2] = k
    pad = np.roll(pad, (-(n1 // 2), -(n2 // 2)), axis=(0, 1))
    return np.fft.fft2(pad)


def circ_conv(x, k):
    """Circular convolution ``x * k`` (``K(k) x``, equivalently ``K(x) k``)."""
    x = as_image(x)
    otf = kernel_otf(k, x.shape)
    return np.real(np.fft.ifft2(np.fft.fft2(x) * otf))


def circ_conv_adjoint_image(u, k):
    """``K(k)^T u``: correlation with the kernel (convolution with its flip)."""
    u = np.asarray(u, dtype=float)
    otf = kernel_otf(k, u.shape)
    return np.real(np.fft.ifft2(np.fft.fft2(u) * np.conj(otf)))


def circ_conv_adjoint_kernel(u, x, kshape):
    """``K(x)^T u`` reshaped as a kernel of size ``kshape``.

    Entry ``[s + c1, t + c2]`` equals ``sum_ij u[i, j] x[i - s, j - t]``.
    """
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    n1, n2 = kshape
    _check_kernel(np.zeros(kshape), x.shape)
    corr = np.real(np.fft.ifft2(np.fft.fft2(u) * np.conj(np.fft.fft2(x))))
    rows = np.arange(-(n1 // 2), n1 // 2 + 1) % x.shape[0]
    cols = np.arange(-(n2 // 2), n2 // 2 + 1) % x.shape[1]
    return corr[np.ix_(rows, cols)]


class Convolution:
    """Fixed-kernel circular convolution on images of one shape.

    The transfer function is computed once at construction and never mutated,
    so instances can be shared between threads.
    """

    def __init__(self, kernel, shape):
        self.kernel = _check_kernel(kernel, shape).copy()
        self.shape = tuple(shape)
        self.otf = kernel_otf(self.kernel, self.shape)
        self.otf.setflags(write=False)

    def __call__(self, x):
        return np.real(np.fft.ifft2(np.fft.fft2(x) * self.otf))

    def adjoint(self, u):
        return np.real(np.fft.ifft2(np.fft.fft2(u) * np.conj(self.otf)))

    def gram(self, x):
        return np.real(np.fft.ifft2(np.fft.fft2(x) * np.abs(self.otf) ** 2))


# (row shift, column shift, scale) for the eight directional differences
DIRECTIONS = (
    (1, 0, 1.0),
    (0, 1, 1.0),
    (1, 1, np.sqrt(2.0)),
    (1, -1, np.sqrt(2.0)),
    (2, 1, np.sqrt(5.0)),
    (2, -1, np.sqrt(5.0)),
    (1, 2, np.sqrt(5.0)),
    (-1, 2, np.sqrt(5.0)),
)


def _valid(n, shift):
    # indices i with 0 <= i + shift < n
    return slice(max(0, -shift), min(n, n - shift))


def _shifted(n, shift):
    return slice(max(0, -shift) + shift, min(n, n - shift) + shift)


def directional_grads(x):
    """Stack of the eight scaled directional differences, shape ``(8, m1, m2)``."""
    x = np.asarray(x, dtype=float)
    m1, m2 = x.shape
    out = np.zeros((len(DIRECTIONS),) + x.shape)
    for p, (di, dj, s) in enumerate(DIRECTIONS):
        vi, vj = _valid(m1, di), _valid(m2, dj)
        si, sj = _shifted(m1, di), _shifted(m2, dj)
        out[p][vi, vj] = (x[si, sj] - x[vi, vj]) / s
    return out


def directional_adjoint(z, channel=None):
    """Adjoint of :func:`directional_grads`.

    With ``channel=None`` the input is the full ``(8, m1, m2)`` stack and the
    channel adjoints are summed; otherwise ``z`` is one ``(m1, m2)`` channel.
    """
    z = np.asarray(z, dtype=float)
    if channel is not None:
        return _directional_adjoint_one(z, channel)
    return sum(_directional_adjoint_one(z[p], p) for p in range(len(DIRECTIONS)))


def _directional_adjoint_one(z, p):
    di, dj, s = DIRECTIONS[p]
    m1, m2 = z.shape
    vi, vj = _valid(m1, di), _valid(m2, dj)
    si, sj = _shifted(m1, di), _shifted(m2, dj)
    out = np.zeros_like(z)
    zv = z[vi, vj] / s
    out[si, sj] += zv
    out[vi, vj] -= zv
    return out


def directional_grad_channel(x, p):
    """Single channel ``p`` (0-based) of :func:`directional_grads`."""
    x = np.asarray(x, dtype=float)
    di, dj, s = DIRECTIONS[p]
    m1, m2 = x.shape
    out = np.zeros_like(x)
    vi, vj = _valid(m1, di), _valid(m2, dj)
    out[vi, vj] = (x[_shifted(m1, di), _shifted(m2, dj)] - x[vi, vj]) / s
    return out


@dataclass(frozen=True)
class SamplingMask:
    """Boolean observation pattern; ``True`` marks an observed entry."""

    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool)
        if ind.ndim != 2:
            raise ValueError(f"mask must be 2D, got shape {ind.shape}")
        ind = ind.copy()
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    @property
    def shape(self):
        return self.indicator.shape

    @property
    def sample_rate(self):
        return float(self.indicator.mean())

    @classmethod
    def full(cls, shape):
        return cls(np.ones(shape, dtype=bool))

    def __call__(self, x):
        return mask_apply(self, x)


def mask_apply(mask, x):
    """Zero the unobserved entries (the self-adjoint projection ``P_Omega``)."""
    x = np.asarray(x, dtype=float)
    if x.shape != mask.shape:
        raise ValueError(f"shape mismatch: mask {mask.shape} vs input {x.shape}")
    return np.where(mask.indicator, x, 0.0)


def random_mask(shape, sample_rate, rng):
    """Bernoulli(``sample_rate``) mask drawn from a numpy ``Generator``."""
    if not 0 < sample_rate <= 1:
        raise ValueError(f"sample rate must lie in (0, 1], got {sample_rate}")
    return SamplingMask(rng.random(shape) < sample_rate)


def solve_tv_x_system(beta, mu, conv, rhs, floor=1e-12):
    """Solve ``(beta D^T D + mu K^T K) x = rhs`` by 2D FFT diagonalization.

    Parameters
    ----------
    beta, mu : float
        Positive weights.
    conv : Convolution or None
        The blur ``K``; ``None`` means the identity.
    rhs : ndarray
        Right-hand side image.
    floor : float
        Smallest admissible eigenvalue; below it the system is rejected.
    """
    if beta <= 0 or mu <= 0:
        raise ValueError(f"beta and mu must be positive, got {beta}, {mu}")
    rhs = np.asarray(rhs, dtype=float)
    eig = beta * dtd_eigenvalues(rhs.shape)
    eig = eig + mu * (1.0 if conv is None else np.abs(conv.otf) ** 2)
    if eig.min() <= floor:
        raise IllPosedSystemError(f"smallest eigenvalue {eig.min():.3e} <= {floor:.0e}")
    return np.real(np.fft.ifft2(np.fft.fft2(rhs) / eig))


def power_norm(apply, shape, iters=200, seed=0):
    """Power-iteration estimate of the largest eigenvalue of a symmetric PSD map."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply(v)
        lam = float(np.vdot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return lam


def disk_kernel(radius, supersample=64):
    """Normalized disk averaging kernel of size ``2*ceil(radius)+1``.

    Each tap holds the area of the unit pixel square covered by the disk,
    estimated on a ``supersample x supersample`` subgrid.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    r = int(np.ceil(radius))
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    taps = np.arange(-r, r + 1)
    k = np.zeros((2 * r + 1, 2 * r + 1))
    for a, i in enumerate(taps):
        yy = i + offs[:, None]
        for b, j in enumerate(taps):
            xx = j + offs[None, :]
            k[a, b] = np.mean(yy ** 2 + xx ** 2 <= radius ** 2)
    return k / k.sum()


def gaussian_kernel(size, sigma):
    """Normalized isotropic Gaussian kernel of odd ``size``."""
    if size % 2 == 0:
        raise ValueError(f"size must be odd, got {size}")
    t = np.arange(size) - size // 2
    g = np.exp(-(t[:, None] ** 2 + t[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def delta_kernel(size=1):
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    return k
