"""Shift localization from a solved dual vector.

The dual vector ``q`` induces a vector trigonometric polynomial

    f(tau, f) = sum_{p,k} c_{:,p,k} exp(-i 2 pi (k tau + p f)),

whose squared norm touches 1 exactly on the shift support.  This module
builds the coefficient tensor ``c``, evaluates ``||f||_2^2`` on a fine grid
with zero-padded FFTs, and extracts the near-1 peaks as shift estimates.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dualsdp import build_qhat
from .model import ShiftPair, Subspace

__all__ = [
    "DualPolynomial",
    "ShiftEstimate",
    "build_polynomial",
    "eval_grid",
    "extract_peaks",
    "feasibility_sup",
    "save_grid",
    "load_grid",
    "write_peaks_csv",
]


@dataclass(frozen=True)
class DualPolynomial:
    """Coefficient tensor of the dual polynomial, shape (K, L, L).

    Entry ``(i, p + N, k + N)`` multiplies ``exp(-i 2 pi (k tau + p f))`` in
    component ``i``; it equals ``(1/L) q_p sum_l d_l exp(i 2 pi k (p-l)/L)``.
    """

    coeff: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeff, dtype=complex)
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[1] % 2 == 0:
            raise ValueError("coefficient tensor must be K x L x L with L odd")
        object.__setattr__(self, "coeff", c)

    @property
    def K(self) -> int:
        return self.coeff.shape[0]

    @property
    def L(self) -> int:
        return self.coeff.shape[1]

    @property
    def N(self) -> int:
        return (self.L - 1) // 2

    def eval_at(self, tau: float, f: float) -> np.ndarray:
        """Pointwise value f(tau, f) in C^K (direct summation)."""
        N = self.N
        freqs = np.arange(-N, N + 1)
        ph_f = np.exp(-2j * np.pi * freqs * f)      # over p
        ph_tau = np.exp(-2j * np.pi * freqs * tau)  # over k
        return np.einsum("ipk,p,k->i", self.coeff, ph_f, ph_tau)


@dataclass(frozen=True)
class ShiftEstimate:
    """Extracted peaks: one shift per connected near-1 component."""

    shifts: list[ShiftPair] = field(default_factory=list)
    peak_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grid_step: float = 0.0

    @property
    def R(self) -> int:
        return len(self.shifts)


def build_polynomial(q: np.ndarray, subspace: Subspace) -> DualPolynomial:
    """Arrange the dual coefficient matrix into the (K, L, L) tensor."""
    q = np.asarray(q, dtype=complex).ravel()
    L, K = subspace.L, subspace.K
    if q.size != L:
        raise ValueError(f"dual vector must have length {L}, got {q.size}")
    # columns of the coefficient matrix are already indexed by (p, k)
    coeff = build_qhat(q, subspace).reshape(K, L, L)
    return DualPolynomial(coeff=coeff)


def eval_grid(poly: DualPolynomial, G: int) -> np.ndarray:
    """``||f||_2^2`` on the G x G grid, node (a, b) = (a/G, b/G) = (tau, f).

    Each coefficient slice is scattered into a G x G array by frequency and
    transformed with one FFT; G >= L is required so distinct frequencies do
    not alias onto the same bin.
    """
    G = int(G)
    if G < poly.L:
        raise ValueError(f"grid size {G} is below L={poly.L}; frequencies would alias")
    N = poly.N
    idx = np.arange(-N, N + 1) % G
    A = np.zeros((poly.K, G, G), dtype=complex)
    A[:, idx[:, None], idx[None, :]] = poly.coeff
    # fft2 gives sum_{p,k} A[p,k] e^{-i2pi(p m + k n)/G}: m is the f index,
    # n the tau index, so transpose to (tau, f) order
    F = np.fft.fft2(A, axes=(1, 2))
    return (F.real**2 + F.imag**2).sum(axis=0).T


def feasibility_sup(grid: np.ndarray) -> float:
    """sup over grid nodes of ||f||_2 (should be <= ~1 for a feasible dual)."""
    if grid.size == 0:
        return 0.0
    return float(np.sqrt(max(float(grid.max()), 0.0)))


def extract_peaks(grid: np.ndarray, threshold: float) -> ShiftEstimate:
    """One shift per torus-connected component of ``{grid >= threshold}``.

    Components use 8-connectivity stitched across both wraparound seams; the
    shift is the component argmax and components are ordered by peak value,
    descending.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly between 0 and 1")
    grid = np.asarray(grid, dtype=float)
    G = grid.shape[0]
    mask = grid >= threshold
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return ShiftEstimate(grid_step=1.0 / G)

    # union-find merge of labels that touch across the torus seams
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for j in np.flatnonzero(mask[0]):
        for dj in (-1, 0, 1):
            if mask[G - 1, (j + dj) % G]:
                union(labels[0, j], labels[G - 1, (j + dj) % G])
    for i in np.flatnonzero(mask[:, 0]):
        for di in (-1, 0, 1):
            if mask[(i + di) % G, G - 1]:
                union(labels[i, 0], labels[(i + di) % G, G - 1])

    roots = np.array([find(l) for l in range(n + 1)])
    merged = roots[labels]
    groups = np.unique(merged[merged > 0])
    values = ndimage.maximum(grid, labels=merged, index=groups)
    argmax = ndimage.maximum_position(grid, labels=merged, index=groups)
    order = np.argsort(values)[::-1]
    shifts = [ShiftPair(argmax[g][0] / G, argmax[g][1] / G) for g in order]
    return ShiftEstimate(shifts=shifts,
                         peak_values=np.asarray(values)[order],
                         grid_step=1.0 / G)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_grid(grid: np.ndarray, path, meta: dict | None = None) -> None:
    """Row-major float64 dump plus a sibling ``.json`` header.

    The header records the grid size and any caller-supplied metadata
    (typically L, K and the seed of the run that produced the dual vector).
    """
    grid = np.ascontiguousarray(np.asarray(grid, dtype="<f8"))
    path = os.fspath(path)
    header = {"G": int(grid.shape[0]), "dtype": "float64", "order": "C"}
    header.update(meta or {})
    with open(path, "wb") as fh:
        fh.write(grid.tobytes())
    with open(os.path.splitext(path)[0] + ".json", "w") as fh:
        json.dump(header, fh, indent=1)
        fh.write("\n")


def load_grid(path) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`save_grid`; returns (grid, header)."""
    path = os.fspath(path)
    with open(os.path.splitext(path)[0] + ".json") as fh:
        header = json.load(fh)
    G = int(header["G"])
    data = np.fromfile(path, dtype="<f8")
    if data.size != G * G:
        raise ValueError(f"grid payload has {data.size} values, expected {G * G}")
    return data.reshape(G, G), header


def write_peaks_csv(estimate: ShiftEstimate, path) -> None:
    """CSV with one row per extracted peak: tau, f, peak_value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "f", "peak_value"])
        for s, v in zip(estimate.shifts, estimate.peak_values):
            writer.writerow([repr(s.tau), repr(s.f), repr(float(v))])
