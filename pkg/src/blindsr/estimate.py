"""Least-squares recovery of gain-waveform products and estimate scoring.

Given shift estimates, the samples are linear in the stacked products
``x_j = c_j h_j``; the block matrix ``B`` with row ``p``, block ``j`` equal to
``a(r_j)^H Dtilde_p`` turns recovery into one least-squares solve.  The gain
phase cannot be split from the direction, so magnitudes fold into ``|c_j|``
and directions are normalized; scores use only gauge-invariant quantities.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import Scene, Subspace, wrap_distance
from .localize import ShiftEstimate
from .spectral import atom, dtilde

__all__ = [
    "LsSystem",
    "Recovery",
    "ScoreReport",
    "build_ls_matrix",
    "recover_products",
    "reconstruct_waveforms",
    "score",
    "score_to_json",
    "write_waveforms_csv",
]


@dataclass(frozen=True)
class LsSystem:
    """The stacked sampling matrix for fixed shifts, with its conditioning."""

    B: np.ndarray  # (L, R*K) complex
    shifts: tuple
    sigma_min: float

    @property
    def L(self) -> int:
        return self.B.shape[0]

    @property
    def R(self) -> int:
        return len(self.shifts)

    @property
    def K(self) -> int:
        return self.B.shape[1] // max(1, len(self.shifts))


@dataclass(frozen=True)
class Recovery:
    """Least-squares products split into magnitudes and unit directions."""

    products: list  # R complex K-vectors, x_j = c_j h_j
    magnitudes: np.ndarray  # |c_j| = ||x_j||_2
    directions: list  # unit K-vectors (zero vector when x_j = 0)
    residual: float
    sigma_min: float
    rank_deficient: bool = False

    @property
    def R(self) -> int:
        return len(self.products)


def build_ls_matrix(shifts, subspace: Subspace) -> LsSystem:
    """Assemble B with ``B[p, jK:(j+1)K] = a(r_j)^H Dtilde_p``.

    Warns (without failing) when ``R*K > L``: the system is underdetermined
    and the later solve falls back to the minimum-norm solution.
    """
    shifts = [tuple(s) for s in shifts]
    if not shifts:
        raise ValueError("need at least one shift to build the system")
    L, K = subspace.L, subspace.K
    R = len(shifts)
    if R * K > L:
        warnings.warn(f"underdetermined system: R*K = {R * K} > L = {L}",
                      stacklevel=2)
    atoms = np.stack([atom(s, L).vec for s in shifts])  # (R, L^2), real
    B = np.empty((L, R * K), dtype=complex)
    N = subspace.N
    for i, p in enumerate(range(-N, N + 1)):
        # each a(r_j)^H Dtilde_p is one K-row; atoms are real so no conjugate
        B[i] = (atoms @ dtilde(p, subspace)).ravel()
    sigma = np.linalg.svd(B, compute_uv=False)
    return LsSystem(B=B, shifts=tuple(shifts), sigma_min=float(sigma.min()))


def recover_products(y: np.ndarray, shifts, subspace: Subspace) -> Recovery:
    """Minimum-norm least-squares solve for the stacked products."""
    y = np.asarray(y, dtype=complex).ravel()
    ls = build_ls_matrix(shifts, subspace)
    if y.size != ls.L:
        raise ValueError(f"samples must have length {ls.L}, got {y.size}")
    x, _, rank, _ = np.linalg.lstsq(ls.B, y, rcond=None)
    rank_deficient = rank < ls.B.shape[1]
    if rank_deficient:
        warnings.warn("rank-deficient system; minimum-norm solution returned",
                      stacklevel=2)
    K = subspace.K
    products = [x[j * K:(j + 1) * K] for j in range(ls.R)]
    mags = np.array([np.linalg.norm(p) for p in products])
    directions = [p / m if m > 0 else np.zeros(K, dtype=complex)
                  for p, m in zip(products, mags)]
    residual = float(np.linalg.norm(ls.B @ x - y))
    return Recovery(products=products, magnitudes=mags, directions=directions,
                    residual=residual, sigma_min=ls.sigma_min,
                    rank_deficient=bool(rank_deficient))


def reconstruct_waveforms(recovery: Recovery, subspace: Subspace) -> list:
    """Waveform samples ``s_j(l) = d_l^H h_j`` for each recovered direction."""
    return [subspace.D @ h for h in recovery.directions]


# ---------------------------------------------------------------------------
# scoring against ground truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreReport:
    """Gauge-invariant comparison of an estimate against the true scene."""

    matches: list  # (true_index, est_index) pairs, greedy nearest first
    shift_errors: np.ndarray  # wrap-max distance per matched pair
    correlations: np.ndarray  # |h_true^H h_est| per matched pair
    waveform_rmse: np.ndarray  # rms deviation of |s(l)| per matched pair
    missed: int
    spurious: int


def score(scene: Scene, estimate: ShiftEstimate, recovery: Recovery | None,
          subspace: Subspace | None = None) -> ScoreReport:
    """Greedy minimum-distance matching, then per-pair error metrics.

    ``recovery`` rows must be aligned with ``estimate.shifts``; pass ``None``
    to score detection only.  ``subspace`` is needed for the waveform column
    and may be omitted otherwise.
    """
    true_pts = [s.as_tuple() for s in scene.shifts]
    est_pts = [s.as_tuple() for s in estimate.shifts]
    dist = np.array([[wrap_distance(t, e) for e in est_pts] for t in true_pts])
    matches = []
    if dist.size:
        open_t = set(range(len(true_pts)))
        open_e = set(range(len(est_pts)))
        while open_t and open_e:
            pairs = [(dist[t, e], t, e) for t in open_t for e in open_e]
            _, t, e = min(pairs)
            matches.append((t, e))
            open_t.remove(t)
            open_e.remove(e)
    errors = np.array([dist[t, e] for t, e in matches])
    corrs = np.zeros(0)
    rmse = np.zeros(0)
    if recovery is not None and matches:
        corrs = np.array([abs(np.vdot(scene.directions[t], recovery.directions[e]))
                          for t, e in matches])
        if subspace is not None:
            est_wave = reconstruct_waveforms(recovery, subspace)
            true_wave = [subspace.D @ h for h in scene.directions]
            rmse = np.array([
                float(np.sqrt(np.mean(
                    (np.abs(true_wave[t]) - np.abs(est_wave[e])) ** 2)))
                for t, e in matches])
    return ScoreReport(matches=matches, shift_errors=errors,
                       correlations=corrs, waveform_rmse=rmse,
                       missed=scene.R - len(matches),
                       spurious=estimate.R - len(matches))


def score_to_json(report: ScoreReport) -> dict:
    """Plain-type view of a score report for JSON serialization."""
    return {
        "matches": [[int(t), int(e)] for t, e in report.matches],
        "shift_errors": [float(v) for v in report.shift_errors],
        "correlations": [float(v) for v in report.correlations],
        "waveform_rmse": [float(v) for v in report.waveform_rmse],
        "missed": int(report.missed),
        "spurious": int(report.spurious),
    }


def write_waveforms_csv(waveforms, path, truth=None) -> None:
    """Magnitude series per source: rows (source, l, true_mag, est_mag).

    ``truth`` is an optional aligned list of true waveforms; its column is
    left empty when unavailable.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "l", "true_mag", "est_mag"])
        for j, w in enumerate(waveforms):
            w = np.asarray(w)
            N = (w.size - 1) // 2
            for i, l in enumerate(range(-N, N + 1)):
                t = "" if truth is None else repr(float(np.abs(truth[j][i])))
                writer.writerow([j, l, t, repr(float(np.abs(w[i])))])
