"""Band-limited kernels and lifted atoms on the delay-Doppler torus.

The sampling model uses ``L = 2N + 1`` uniform samples (``L`` odd), so every
object here is band-limited to integer frequencies ``-N..N``.  Two kernels do
all the work:

* the normalized Dirichlet kernel ``D_N``, which interpolates exactly on the
  ``1/L`` grid and generates the lifted atoms ``a(r)``;
* a squared-Fejer kernel ``F`` with fast decay, used to construct
  well-localized dual certificates.

Both are evaluated through their Fourier coefficients, which keeps all
derivative formulas exact (no finite differencing anywhere in the library).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Atom",
    "FejerCoeffs",
    "atom",
    "atom_deriv",
    "dirichlet",
    "dtilde",
    "fejer_coeffs",
    "fejer_eval",
    "mu",
]

_MAX_ORDER = 3


# ---------------------------------------------------------------------------
# Dirichlet kernel
# ---------------------------------------------------------------------------

def dirichlet(t, N: int, order: int = 0):
    """Normalized Dirichlet kernel ``D_N(t) = (1/L) sum_r exp(i 2 pi r t)``
    or one of its first three derivatives.

    Parameters
    ----------
    t : float or array_like
        Evaluation points (periodic with period 1).
    N : int
        Band parameter; the sum runs over ``r = -N..N`` and ``L = 2N + 1``.
    order : int
        Derivative order, 0 through 3.

    Returns
    -------
    float or ndarray
        Real values; the symmetric coefficient sum is exactly real for every
        order, so no imaginary part is ever formed.
    """
    if order < 0 or order > _MAX_ORDER:
        raise ValueError(f"derivative order must be 0..{_MAX_ORDER}, got {order}")
    if N < 0:
        raise ValueError("N must be nonnegative")
    t_arr = np.asarray(t, dtype=float)
    L = 2 * N + 1
    r = np.arange(-N, N + 1, dtype=float)
    phase = 2.0 * np.pi * t_arr[..., None] * r
    w = (2.0 * np.pi * r) ** order
    # (i)^order folds the complex exponential onto a single trig function.
    if order % 2 == 0:
        vals = w * np.cos(phase)
        sign = 1.0 if order % 4 == 0 else -1.0
    else:
        vals = w * np.sin(phase)
        sign = -1.0 if order % 4 == 1 else 1.0
    out = sign * vals.sum(axis=-1) / L
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Lifted atoms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    """Unit-norm lifted atom at a continuous shift ``r = (tau, f)``.

    ``vec`` holds the flattened coefficients ``a[(k, l)] =
    D_N(l/L - tau) * D_N(k/L - f)`` with the frequency index ``k`` outer and
    the delay index ``l`` inner: ``flat = (k + N) * L + (l + N)``.
    """

    r: tuple[float, float]
    L: int
    vec: np.ndarray

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.vec
        return self.vec.astype(dtype)


def _check_L(L: int) -> int:
    if L < 1 or L % 2 == 0:
        raise ValueError(f"L must be a positive odd integer, got {L}")
    return (L - 1) // 2


def atom(r, L: int) -> Atom:
    """Build the unit-norm atom ``a(r)`` for shift ``r = (tau, f)``.

    The grid-sampling property of the Dirichlet kernel makes the squared norm
    exactly one, and places the atom on a canonical basis vector whenever both
    coordinates sit on the ``1/L`` grid.
    """
    N = _check_L(L)
    tau, f = float(r[0]), float(r[1])
    grid = np.arange(-N, N + 1) / L
    d_tau = dirichlet(grid - tau, N)
    d_f = dirichlet(grid - f, N)
    return Atom(r=(tau, f), L=L, vec=np.kron(d_f, d_tau))


def atom_deriv(r, L: int, dtau_order: int, df_order: int) -> np.ndarray:
    """Partial derivative ``d^{m'}/dtau^{m'} d^{n'}/df^{n'} a(r)``, orders <= 2.

    Differentiation acts on the shift, so each factor picks up one minus sign
    per derivative order relative to the kernel derivative in its argument.
    """
    if not (0 <= dtau_order <= 2 and 0 <= df_order <= 2):
        raise ValueError("atom derivative orders must be in 0..2")
    N = _check_L(L)
    tau, f = float(r[0]), float(r[1])
    grid = np.arange(-N, N + 1) / L
    d_tau = (-1.0) ** dtau_order * dirichlet(grid - tau, N, dtau_order)
    d_f = (-1.0) ** df_order * dirichlet(grid - f, N, df_order)
    return np.kron(d_f, d_tau)


def dtilde(p: int, subspace) -> np.ndarray:
    """Sampling matrix ``Dtilde_p`` mapping the coefficient space to C^K.

    Row ``(k, l)`` (same flattening as :func:`atom`) equals
    ``exp(i 2 pi p k / L) * d_{p-l}^H`` with the waveform-row subscript
    ``p - l`` wrapped into ``-N..N``.  ``subspace.D`` stores ``d_l^H`` as row
    ``l + N``, so wrapping is a plain modular row gather.
    """
    D = subspace.D
    L, K = D.shape
    N = _check_L(L)
    if not -N <= p <= N:
        raise ValueError(f"sample index p={p} outside -{N}..{N}")
    k = np.arange(-N, N + 1)
    phases = np.exp(2j * np.pi * p * k / L)
    rows = (p + 2 * N - np.arange(L)) % L  # storage row of d_{p-l} for l = -N..N
    out = phases[:, None, None] * D[rows][None, :, :]
    return out.reshape(L * L, K)


# ---------------------------------------------------------------------------
# Squared-Fejer kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FejerCoeffs:
    """Fourier coefficients of the squared-Fejer certificate kernel.

    ``g[n + deg]`` is the coefficient of ``exp(i 2 pi n t)`` scaled so that
    ``F(t) = (1/T) sum_n g_n exp(i 2 pi n t)`` and ``sum_n g_n = T``.
    For even ``N`` the support is exactly ``|n| <= N`` and
    ``F(t) = (sin(T pi t) / (T sin(pi t)))^4`` with ``T = N/2 + 1``.
    For odd ``N`` the same construction with ``T = ceil(N/2) + 1`` overshoots
    the band by one coefficient; the overshoot is truncated and the remainder
    rescaled so ``F(0) = 1`` still holds (the closed form is then approximate).
    """

    N: int
    T: int
    deg: int
    g: np.ndarray

    @property
    def support(self) -> np.ndarray:
        """Integer frequencies ``-deg..deg`` carrying the coefficients."""
        return np.arange(-self.deg, self.deg + 1)

    def padded(self, N: int) -> np.ndarray:
        """Coefficients aligned on the full band ``-N..N`` (zeros outside)."""
        if N < self.deg:
            raise ValueError("target band narrower than kernel support")
        out = np.zeros(2 * N + 1)
        out[N - self.deg : N + self.deg + 1] = self.g
        return out


def fejer_coeffs(N: int) -> FejerCoeffs:
    """Coefficients ``g_n = (1/T) sum_l (1 - |l|/T)(1 - |n-l|/T)`` on band N."""
    if N < 1:
        raise ValueError("N must be positive")
    T = N // 2 + 1 if N % 2 == 0 else (N + 1) // 2 + 1
    tri = 1.0 - np.abs(np.arange(-(T - 1), T)) / T
    conv = np.convolve(tri, tri) / T  # support |n| <= 2T - 2
    deg = 2 * (T - 1)
    if deg > N:
        cut = deg - N
        conv = conv[cut:-cut]
        conv *= T / conv.sum()
        deg = N
    return FejerCoeffs(N=N, T=T, deg=deg, g=conv)


def fejer_eval(t, N: int, order: int = 0):
    """Evaluate the squared-Fejer kernel ``F`` (or derivative up to 3rd).

    Same symmetric coefficient-sum evaluation as :func:`dirichlet`; the
    result is exactly real and any numerically stray imaginary part would be
    below 1e-12 and is never formed.
    """
    if order < 0 or order > _MAX_ORDER:
        raise ValueError(f"derivative order must be 0..{_MAX_ORDER}, got {order}")
    coeffs = fejer_coeffs(N)
    t_arr = np.asarray(t, dtype=float)
    n = coeffs.support.astype(float)
    phase = 2.0 * np.pi * t_arr[..., None] * n
    w = coeffs.g * (2.0 * np.pi * n) ** order
    if order % 2 == 0:
        vals = w * np.cos(phase)
        sign = 1.0 if order % 4 == 0 else -1.0
    else:
        vals = w * np.sin(phase)
        sign = -1.0 if order % 4 == 1 else 1.0
    out = sign * vals.sum(axis=-1) / coeffs.T
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out)
    return out


def mu(N: int) -> float:
    """Curvature scale ``mu = sqrt(|F''(0)|)`` of the certificate kernel.

    For even ``N`` this equals ``sqrt((pi^2 / 3) (N^2 + 4N))`` exactly.
    """
    second = fejer_eval(0.0, N, order=2)
    if second >= 0:
        raise ValueError("kernel curvature at zero must be negative")
    return float(np.sqrt(-second))
