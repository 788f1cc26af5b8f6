"""Signal model: scenes of delay-Doppler shifted waveforms and their samples.

A scene is ``R`` point sources, each with a continuous shift ``r_j = (tau_j,
f_j)`` on the unit torus, a complex gain ``c_j``, and a unit direction ``h_j``
in a known ``K``-dimensional waveform subspace.  The observation is ``L = 2N+1``
samples

    y_p = sum_j c_j a(r_j)^H Dtilde_p h_j,      p = -N..N,

equivalently ``y_p = Tr(Dtilde_p U)`` for the lifted rank-R matrix
``U = sum_j c_j h_j a(r_j)^H``.  This module owns the scene/subspace types,
their random generators, both synthesis routes, lifting, and the JSON
round-trip formats.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import atom, dtilde

__all__ = [
    "LiftedMatrix",
    "Observation",
    "Scene",
    "SeparationCheck",
    "ShiftPair",
    "Subspace",
    "awgn",
    "check_separation",
    "lift",
    "random_scene",
    "random_shifts",
    "random_subspace",
    "scene_from_json",
    "scene_to_json",
    "subspace_from_json",
    "subspace_to_json",
    "observation_from_json",
    "observation_to_json",
    "synthesize",
    "synthesize_direct",
    "wrap_distance",
]

#: Default minimum-separation multiple of 1/N used by the rejection sampler.
SEPARATION_FACTOR = 2.38

PRNG_NAME = "PCG64"


# ---------------------------------------------------------------------------
# Core types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftPair:
    """A delay-Doppler pair ``(tau, f)``, each coordinate on [0, 1)."""

    tau: float
    f: float

    def __post_init__(self):
        object.__setattr__(self, "tau", float(self.tau) % 1.0)
        object.__setattr__(self, "f", float(self.f) % 1.0)

    def as_tuple(self) -> tuple[float, float]:
        return (self.tau, self.f)


@dataclass(frozen=True)
class Scene:
    """Ground-truth sources: shifts, complex gains ``c_j``, unit directions ``h_j``."""

    shifts: tuple[ShiftPair, ...]
    gains: np.ndarray      # (R,) complex
    directions: np.ndarray  # (R, K) complex, unit rows

    def __post_init__(self):
        object.__setattr__(self, "shifts", tuple(
            s if isinstance(s, ShiftPair) else ShiftPair(*s) for s in self.shifts))
        object.__setattr__(self, "gains", np.asarray(self.gains, dtype=complex))
        object.__setattr__(self, "directions",
                           np.atleast_2d(np.asarray(self.directions, dtype=complex)))
        if len(self.shifts) != len(self.gains) or len(self.shifts) != self.directions.shape[0]:
            raise ValueError("shifts, gains and directions must agree in length")

    @property
    def R(self) -> int:
        return len(self.shifts)

    @property
    def K(self) -> int:
        return self.directions.shape[1]

    def shift_array(self) -> np.ndarray:
        return np.array([s.as_tuple() for s in self.shifts], dtype=float)


@dataclass(frozen=True)
class Subspace:
    """Known waveform subspace; row ``l + N`` of ``D`` stores ``d_l^H``."""

    D: np.ndarray  # (L, K) complex
    kind: str = "gaussian"

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=complex))
        if D.shape[0] % 2 == 0:
            raise ValueError("subspace length L must be odd")
        object.__setattr__(self, "D", D)

    @property
    def L(self) -> int:
        return self.D.shape[0]

    @property
    def K(self) -> int:
        return self.D.shape[1]

    @property
    def N(self) -> int:
        return (self.L - 1) // 2


@dataclass(frozen=True)
class Observation:
    """Samples ``y_p`` in ascending ``p = -N..N`` plus provenance metadata."""

    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex).ravel()
        if y.size % 2 == 0:
            raise ValueError("observation length L must be odd")
        object.__setattr__(self, "y", y)

    @property
    def L(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class LiftedMatrix:
    """Rank-R lift ``U = sum_j c_j h_j a(r_j)^H`` of shape (K, L^2)."""

    U: np.ndarray
    L: int

    @property
    def K(self) -> int:
        return self.U.shape[0]


@dataclass(frozen=True)
class SeparationCheck:
    """Result of the pairwise wraparound-separation test."""

    delta_min: float
    threshold: float
    ok: bool


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def _wrap1(d: np.ndarray) -> np.ndarray:
    a = np.abs(np.asarray(d, dtype=float)) % 1.0
    return np.minimum(a, 1.0 - a)


def wrap_distance(r1, r2) -> float:
    """Wraparound sup-distance ``max(|tau1-tau2|_T, |f1-f2|_T)`` on the torus."""
    t1, f1 = (r1.tau, r1.f) if isinstance(r1, ShiftPair) else (r1[0], r1[1])
    t2, f2 = (r2.tau, r2.f) if isinstance(r2, ShiftPair) else (r2[0], r2[1])
    return float(np.max(_wrap1(np.array([t1 - t2, f1 - f2]))))


def check_separation(shifts, N: int, factor: float = SEPARATION_FACTOR) -> SeparationCheck:
    """Minimum pairwise wraparound distance versus the ``factor/N`` threshold.

    A single shift is vacuously separated and reports ``delta_min = inf``.
    """
    shifts = [s if isinstance(s, ShiftPair) else ShiftPair(*s) for s in shifts]
    threshold = factor / N
    if len(shifts) <= 1:
        return SeparationCheck(delta_min=math.inf, threshold=threshold, ok=True)
    delta = min(wrap_distance(a, b)
                for i, a in enumerate(shifts) for b in shifts[i + 1:])
    return SeparationCheck(delta_min=delta, threshold=threshold, ok=delta >= threshold)


# ---------------------------------------------------------------------------
# Random generators
# ---------------------------------------------------------------------------

def random_subspace(L: int, K: int, kind: str = "gaussian", seed: int = 0) -> Subspace:
    """Draw the known subspace rows ``d_l``.

    Kinds: ``gaussian`` (entries CN(0,1), so ``E[d d^H] = I_K``),
    ``fourier_rows`` (``d_l = (1, e^{i2pi s_l}, ..., e^{i2pi(K-1)s_l})`` with
    uniform ``s_l``), and ``uniform_pm1`` (real and imaginary parts iid
    uniform on [-1, 1]).
    """
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        d = (rng.standard_normal((L, K)) + 1j * rng.standard_normal((L, K))) / np.sqrt(2.0)
    elif kind == "fourier_rows":
        s = rng.uniform(0.0, 1.0, size=L)
        d = np.exp(2j * np.pi * np.outer(s, np.arange(K)))
    elif kind == "uniform_pm1":
        d = rng.uniform(-1.0, 1.0, size=(L, K)) + 1j * rng.uniform(-1.0, 1.0, size=(L, K))
    else:
        raise ValueError(f"unknown subspace kind {kind!r}")
    return Subspace(D=d.conj(), kind=kind)  # store d_l^H per row


def random_shifts(R: int, N: int, seed: int = 0, min_sep: float | None = None,
                  max_tries: int = 10_000) -> tuple[ShiftPair, ...]:
    """Rejection-sample ``R`` shifts with pairwise wraparound separation.

    Raises ``RuntimeError`` when ``max_tries`` uniform proposals cannot extend
    the current set, which signals an infeasible (R, N, min_sep) combination.
    """
    min_sep = SEPARATION_FACTOR / N if min_sep is None else min_sep
    rng = np.random.default_rng(seed)
    out: list[ShiftPair] = []
    tries = 0
    while len(out) < R:
        cand = ShiftPair(rng.uniform(), rng.uniform())
        if all(wrap_distance(cand, s) >= min_sep for s in out):
            out.append(cand)
        else:
            tries += 1
            if tries >= max_tries:
                raise RuntimeError(
                    f"could not place {R} shifts at separation {min_sep:.4g} "
                    f"after {max_tries} rejected proposals")
    return tuple(out)


def random_scene(R: int, K: int, seed: int = 0, gain_model: str = "unit_modulus",
                 shifts=None, N: int | None = None,
                 min_sep: float | None = None) -> Scene:
    """Draw gains and directions (and, if not supplied, separated shifts).

    Directions are uniform on the complex unit sphere of C^K.  Gain models:
    ``unit_modulus`` (random phase) and ``fading`` (random sign times
    ``0.5 + w^2`` with standard normal ``w``).
    """
    rng = np.random.default_rng(seed)
    if shifts is None:
        if N is None:
            raise ValueError("random_scene needs explicit shifts or N for sampling")
        shifts = random_shifts(R, N, seed=rng.integers(2**63), min_sep=min_sep)
    shifts = tuple(s if isinstance(s, ShiftPair) else ShiftPair(*s) for s in shifts)
    if len(shifts) != R:
        raise ValueError(f"expected {R} shifts, got {len(shifts)}")

    h = rng.standard_normal((R, K)) + 1j * rng.standard_normal((R, K))
    h /= np.linalg.norm(h, axis=1, keepdims=True)

    if gain_model == "unit_modulus":
        c = np.exp(2j * np.pi * rng.uniform(size=R)).astype(complex)
    elif gain_model == "fading":
        w = rng.standard_normal(R)
        sign = rng.choice([-1.0, 1.0], size=R)
        c = (sign * (0.5 + w**2)).astype(complex)
    else:
        raise ValueError(f"unknown gain model {gain_model!r}")
    return Scene(shifts=shifts, gains=c, directions=h)


# ---------------------------------------------------------------------------
# Synthesis and lifting
# ---------------------------------------------------------------------------

def synthesize(scene: Scene, subspace: Subspace, meta: dict | None = None) -> Observation:
    """Samples through the lifted trace form ``y_p = sum_j c_j a(r_j)^H Dtilde_p h_j``."""
    L, K = subspace.L, subspace.K
    if scene.K != K:
        raise ValueError("scene direction dimension does not match subspace")
    N = subspace.N
    atoms = [atom(s.as_tuple(), L).vec for s in scene.shifts]
    y = np.zeros(L, dtype=complex)
    for ip, p in enumerate(range(-N, N + 1)):
        Dp = dtilde(p, subspace)
        for a_vec, c, h in zip(atoms, scene.gains, scene.directions):
            y[ip] += c * (a_vec.conj() @ Dp @ h)
    base = {"prng": PRNG_NAME, "scene_digest": digest_json(scene_to_json(scene)),
            "subspace_digest": digest_json(subspace_to_json(subspace))}
    if meta:
        base.update(meta)
    return Observation(y=y, meta=base)


def synthesize_direct(scene: Scene, subspace: Subspace) -> np.ndarray:
    """Independent synthesis through the expanded double-DFT sum.

    Computes ``y_p = (1/L) sum_j c_j sum_{k,l} d_l^H h_j
    exp(i2pi k (p-l)/L) exp(i2pi (p f_j - k tau_j))`` literally; kept separate
    from :func:`synthesize` as a cross-check oracle.
    """
    L, K = subspace.L, subspace.K
    N = subspace.N
    kk = np.arange(-N, N + 1)
    ll = np.arange(-N, N + 1)
    pp = np.arange(-N, N + 1)
    proj = subspace.D @ scene.directions.T  # (L, R): row l is d_l^H h_j
    y = np.zeros(L, dtype=complex)
    for j in range(scene.R):
        tau, f = scene.shifts[j].as_tuple()
        # e1[p, k] = exp(i2pi k p / L) exp(i2pi (p f - k tau))
        e1 = np.exp(2j * np.pi * (np.outer(pp, kk) / L + pp[:, None] * f - kk[None, :] * tau))
        # e2[k, l] = exp(-i2pi k l / L) d_l^H h_j
        e2 = np.exp(-2j * np.pi * np.outer(kk, ll) / L) * proj[None, :, j]
        y += scene.gains[j] * (e1 @ e2.sum(axis=1)) / L
    return y


def lift(scene: Scene, L: int) -> LiftedMatrix:
    """Rank-R lifted matrix ``U = sum_j c_j h_j a(r_j)^H`` of shape (K, L^2)."""
    U = np.zeros((scene.K, L * L), dtype=complex)
    for s, c, h in zip(scene.shifts, scene.gains, scene.directions):
        U += c * np.outer(h, atom(s.as_tuple(), L).vec.conj())
    return LiftedMatrix(U=U, L=L)


def awgn(y: np.ndarray, snr_db: float, seed: int = 0) -> tuple[np.ndarray, dict]:
    """Add complex white noise rescaled to hit ``snr_db`` exactly.

    Returns the noisy samples and a dict with the achieved SNR (equal to the
    target by construction, recorded for reports).
    """
    rng = np.random.default_rng(seed)
    y = np.asarray(y, dtype=complex)
    n = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    target = np.linalg.norm(y) * 10.0 ** (-snr_db / 20.0)
    n *= target / np.linalg.norm(n)
    achieved = 20.0 * np.log10(np.linalg.norm(y) / np.linalg.norm(n))
    return y + n, {"snr_db_target": float(snr_db), "snr_db_achieved": float(achieved),
                   "noise_norm": float(np.linalg.norm(n)), "seed": seed}


# ---------------------------------------------------------------------------
# JSON round trip (complex numbers as [re, im] pairs)
# ---------------------------------------------------------------------------

def _c2j(arr: np.ndarray):
    arr = np.asarray(arr, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _j2c(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def digest_json(obj: dict) -> str:
    """Stable sha256 digest of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def scene_to_json(scene: Scene) -> dict:
    return {
        "format": "scene/1",
        "shifts": [[s.tau, s.f] for s in scene.shifts],
        "gains": _c2j(scene.gains),
        "directions": _c2j(scene.directions),
    }


def scene_from_json(data: dict) -> Scene:
    return Scene(shifts=tuple(ShiftPair(*s) for s in data["shifts"]),
                 gains=_j2c(data["gains"]), directions=_j2c(data["directions"]))


def subspace_to_json(sub: Subspace) -> dict:
    return {"format": "subspace/1", "kind": sub.kind, "D": _c2j(sub.D)}


def subspace_from_json(data: dict) -> Subspace:
    return Subspace(D=_j2c(data["D"]), kind=data.get("kind", "gaussian"))


def observation_to_json(obs: Observation) -> dict:
    return {"format": "observation/1", "y": _c2j(obs.y), "meta": obs.meta}


def observation_from_json(data: dict) -> Observation:
    return Observation(y=_j2c(data["y"]), meta=dict(data.get("meta", {})))
