"""Dual semidefinite relaxation: operators, assembly, and the conic container.

The dual of the atomic-norm denoising program maximizes ``<q, y>_R`` over
coefficient vectors ``q`` whose induced vector trigonometric polynomial

    f(r) = X*(q) a(r) = sum_{p,k} Qhat[:, (p,k)] e^{-i 2 pi (k tau + p f)}

stays inside the unit ball everywhere on the torus.  The sup-norm constraint
is exactly representable by semidefinite blocks: a Gram-like matrix ``Q``
tied down by one-diagonal Toeplitz-tensor trace equalities, bordered by the
coefficient matrix ``Qhat``:

    [[Q, Qhat^H], [Qhat, I_K]] >= 0,   Tr(Theta_off Q) = delta_off.

This module owns the forward/adjoint sampling operators, ``Qhat`` assembly,
the trace-row group, problem assembly for the exact and noisy variants, the
real symmetric embedding used by the text export format, and the high-level
``solve_dual`` entry point.  The numerical cone solver lives in
:mod:`blindsr.solver`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .model import Observation, Subspace
from .spectral import dtilde

__all__ = [
    "BlockSpec",
    "ConicProblem",
    "DualSolution",
    "Prop1Report",
    "TraceGroup",
    "adjoint_operator",
    "assemble",
    "build_qhat",
    "check_prop1",
    "embed_hermitian",
    "export_conic",
    "forward_operator",
    "import_conic",
    "solve_dual",
    "theta_trace_rows",
    "unembed_hermitian",
]

_MATRIX_KINDS = ("psd", "psd_complex")
_VECTOR_KINDS = ("free", "soc")


# ---------------------------------------------------------------------------
# Sampling operators
# ---------------------------------------------------------------------------

def forward_operator(U: np.ndarray, subspace: Subspace) -> np.ndarray:
    """Samples ``y_p = Tr(Dtilde_p U)`` of a lifted (K, L^2) matrix."""
    L = subspace.L
    N = subspace.N
    U = np.asarray(U, dtype=complex)
    y = np.empty(L, dtype=complex)
    for ip, p in enumerate(range(-N, N + 1)):
        y[ip] = np.sum(dtilde(p, subspace) * U.T)
    return y


def adjoint_operator(q: np.ndarray, subspace: Subspace) -> np.ndarray:
    """Adjoint ``X*(q) = sum_p q_p Dtilde_p^H`` of shape (K, L^2).

    Adjoint with respect to the entrywise real inner products
    ``<q, y>_R = Re(y^H q)`` and ``<A, U>_R = Re Tr(A^H U)``.
    """
    L = subspace.L
    N = subspace.N
    q = np.asarray(q, dtype=complex).ravel()
    if q.size != L:
        raise ValueError(f"q must have length {L}")
    out = np.zeros((subspace.K, L * L), dtype=complex)
    for ip, p in enumerate(range(-N, N + 1)):
        out += q[ip] * dtilde(p, subspace).conj().T
    return out


def _row_dfts(subspace: Subspace) -> np.ndarray:
    """``ghat[k + N] = sum_l d_l e^{-i 2 pi k l / L}`` for k = -N..N, shape (L, K)."""
    L = subspace.L
    N = subspace.N
    freqs = np.arange(-N, N + 1)
    E = np.exp(-2j * np.pi * np.outer(freqs, freqs) / L)
    return E @ subspace.D.conj()  # row l of D stores d_l^H


def build_qhat(q: np.ndarray, subspace: Subspace) -> np.ndarray:
    """Coefficient matrix ``Qhat`` of the dual polynomial, shape (K, L^2).

    Column ``(p, k)`` (p outer, k inner: ``col = (p+N) L + (k+N)``) equals
    ``(1/L) q_p e^{i 2 pi k p / L} ghat_k`` where ``ghat_k`` is the k-th DFT
    of the subspace rows.  The induced polynomial is
    ``f(r) = sum_{p,k} Qhat[:, (p,k)] e^{-i 2 pi (k tau + p f)}`` and agrees
    with ``X*(q) a(r)`` at every shift.
    """
    L, K = subspace.L, subspace.K
    N = subspace.N
    q = np.asarray(q, dtype=complex).ravel()
    if q.size != L:
        raise ValueError(f"q must have length {L}")
    freqs = np.arange(-N, N + 1)
    phase = np.exp(2j * np.pi * np.outer(freqs, freqs) / L)  # [p, k]
    ghat = _row_dfts(subspace)  # (L, K)
    cols = q[:, None, None] * phase[:, :, None] * ghat[None, :, :] / L  # [p, k, i]
    return cols.transpose(2, 0, 1).reshape(K, L * L)


# ---------------------------------------------------------------------------
# Trace-row group (Toeplitz-tensor functionals)
# ---------------------------------------------------------------------------

class TraceGroup:
    """The ``(2L-1)^2`` real trace functionals pinning the Gram block.

    The leading ``L^2 x L^2`` principal submatrix of PSD block ``block`` is
    viewed as an ``(L, L) x (L, L)`` tensor; the functional at offset
    ``(d1, d2)`` sums entries ``X[(a+d1, b+d2), (a, b)]`` over all valid
    ``(a, b)``.  Offsets come in conjugate pairs, merged into one real row for
    offset ``(0, 0)`` and (real, imag) row pairs for the lexicographic
    one-sided offsets, for ``(2L-1)^2`` rows total.
    """

    def __init__(self, block: int, L: int, target0: float = 1.0):
        self.block = block
        self.L = L
        onesided = [(0, d2) for d2 in range(L)]
        onesided += [(d1, d2) for d1 in range(1, L) for d2 in range(-(L - 1), L)]
        self.onesided = np.array(onesided, dtype=int)
        n1 = len(onesided)
        self.row_to_side = np.repeat(np.arange(n1), 2)[1:]
        self.parts = (np.arange(2 * n1 - 1) + 1) % 2
        self.parts[0] = 0
        rhs = np.zeros(2 * n1 - 1)
        rhs[0] = target0
        self.rhs = rhs
        self._pos_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def nrows(self) -> int:
        return len(self.rhs)

    @property
    def offsets(self) -> np.ndarray:
        """Per-row (d1, d2) offsets (duplicated across re/im row pairs)."""
        return self.onesided[self.row_to_side]

    def positions(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Flat gather positions into an (n, n) block and their offset ids."""
        if n < self.L * self.L:
            raise ValueError("block side smaller than the tensor grid")
        if n not in self._pos_cache:
            L = self.L
            pos_chunks = []
            id_chunks = []
            for s, (d1, d2) in enumerate(self.onesided):
                a = np.arange(max(0, -d1), L - max(0, d1))
                b = np.arange(max(0, -d2), L - max(0, d2))
                A, B = np.meshgrid(a, b, indexing="ij")
                rows = (A + d1) * L + (B + d2)
                cols = A * L + B
                p = (rows * n + cols).ravel()
                pos_chunks.append(p)
                id_chunks.append(np.full(p.size, s, dtype=np.intp))
            self._pos_cache[n] = (np.concatenate(pos_chunks),
                                  np.concatenate(id_chunks))
        return self._pos_cache[n]

    def offset_sums(self, X: np.ndarray) -> np.ndarray:
        """Complex sums ``T(off) = sum X[(a,b)+off, (a,b)]`` per one-sided offset."""
        n = X.shape[0]
        pos, ids = self.positions(n)
        flat = X.ravel()[pos]
        n1 = len(self.onesided)
        re = np.bincount(ids, weights=flat.real, minlength=n1)
        im = np.bincount(ids, weights=flat.imag, minlength=n1)
        return re + 1j * im

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Row values (real) of all functionals on Hermitian ``X``."""
        T = self.offset_sums(np.asarray(X, dtype=complex))
        vals = np.where(self.parts == 0, T.real[self.row_to_side],
                        T.imag[self.row_to_side])
        return vals

    def scatter(self, B: np.ndarray, weights: np.ndarray) -> None:
        """Accumulate ``sum_rows w_row A_row`` into ``B`` (pre-Hermitianized form).

        The caller symmetrizes as ``(B + B^H) / 2`` afterwards; writing the
        combined weight ``w_re + i w_im`` onto the entry positions of each
        offset produces exactly the Hermitian row representers.
        """
        n1 = len(self.onesided)
        w_re = np.bincount(self.row_to_side, weights=np.where(self.parts == 0, weights, 0.0),
                           minlength=n1)
        w_im = np.bincount(self.row_to_side, weights=np.where(self.parts == 1, weights, 0.0),
                           minlength=n1)
        omega = w_re + 1j * w_im
        pos, ids = self.positions(B.shape[0])
        np.add.at(B.ravel(), pos, omega[ids])

    def to_triplets(self, n: int):
        """Expand into per-row (r, c, v) entry lists (export/debug path)."""
        L = self.L
        out = []
        for s, (d1, d2) in enumerate(self.onesided):
            a = np.arange(max(0, -d1), L - max(0, d1))
            b = np.arange(max(0, -d2), L - max(0, d2))
            A, B = np.meshgrid(a, b, indexing="ij")
            rows = ((A + d1) * L + (B + d2)).ravel()
            cols = (A * L + B).ravel()
            out.append((rows, cols))
        trips = []
        for row_id in range(self.nrows):
            s = self.row_to_side[row_id]
            rows, cols = out[s]
            v = np.full(rows.size, 1.0 + 0j if self.parts[row_id] == 0 else -1j)
            trips.append((rows, cols, v))
        return trips


def theta_trace_rows(L: int) -> TraceGroup:
    """Standalone trace-row group for an ``L^2`` Gram block (unit target)."""
    if L < 1 or L % 2 == 0:
        raise ValueError("L must be a positive odd integer")
    return TraceGroup(block=0, L=L)


# ---------------------------------------------------------------------------
# Conic problem container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSpec:
    """One variable block of the conic problem."""

    kind: str  # free | soc | psd | psd_complex
    n: int     # vector length, or matrix side for psd kinds

    def __post_init__(self):
        if self.kind not in _MATRIX_KINDS + _VECTOR_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("block dimension must be positive")

    @property
    def is_matrix(self) -> bool:
        return self.kind in _MATRIX_KINDS

    @property
    def embedded_dim(self) -> int:
        """Dimension in the real symmetric embedding (complex sides double)."""
        return 2 * self.n if self.kind == "psd_complex" else self.n


@dataclass
class MatCOO:
    """COO entries of generic rows on one matrix block (B-matrix convention).

    Row ``row[i]`` accumulates ``Re(v[i] * X[r[i], c[i]])``; the Hermitian
    functional matrix is the symmetrization of the implied B matrix.
    """

    row: np.ndarray
    r: np.ndarray
    c: np.ndarray
    v: np.ndarray


@dataclass
class VecCOO:
    """COO entries of generic rows on one vector block (real coefficients)."""

    row: np.ndarray
    idx: np.ndarray
    v: np.ndarray


@dataclass
class ConicProblem:
    """Block-structured equality-form conic program ``min c.x, Ax = b, x in K``.

    Rows are ordered: structured trace groups first (in list order), then the
    generic rows.  All functionals are real-valued; matrix-block coefficients
    use the B-matrix convention of :class:`MatCOO`.
    """

    blocks: list[BlockSpec]
    groups: list[TraceGroup] = field(default_factory=list)
    gen_rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gen_mat: dict[int, MatCOO] = field(default_factory=dict)
    gen_vec: dict[int, VecCOO] = field(default_factory=dict)
    obj_mat: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)
    obj_vec: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    obj_const: float = 0.0
    meta: dict = field(default_factory=dict)

    # ----- layout ---------------------------------------------------------

    @property
    def m(self) -> int:
        return sum(g.nrows for g in self.groups) + self.gen_rhs.size

    @property
    def generic_start(self) -> int:
        return sum(g.nrows for g in self.groups)

    def group_slices(self) -> list[slice]:
        out, start = [], 0
        for g in self.groups:
            out.append(slice(start, start + g.nrows))
            start += g.nrows
        return out

    def rhs_full(self) -> np.ndarray:
        parts = [g.rhs for g in self.groups] + [self.gen_rhs]
        return np.concatenate(parts) if parts else np.zeros(0)

    def cone_dims(self) -> list[tuple[str, int]]:
        """Block kinds with real-embedded dimensions (complex PSD sides doubled)."""
        return [("psd" if b.kind == "psd_complex" else b.kind, b.embedded_dim)
                for b in self.blocks]

    def block_shape(self, bi: int):
        b = self.blocks[bi]
        if b.is_matrix:
            dtype = complex if b.kind == "psd_complex" else float
            return (b.n, b.n), dtype
        return (b.n,), float

    def zero_blocks(self) -> list[np.ndarray]:
        return [np.zeros(*self.block_shape(bi)[:1],
                         dtype=self.block_shape(bi)[1]) for bi in range(len(self.blocks))]

    # ----- linear algebra hooks -------------------------------------------

    def apply_A(self, xblocks: list[np.ndarray]) -> np.ndarray:
        """All row functionals evaluated at a block iterate."""
        out = np.zeros(self.m)
        for g, sl in zip(self.groups, self.group_slices()):
            out[sl] = g.apply(xblocks[g.block])
        base = self.generic_start
        ngen = self.gen_rhs.size
        for bi, coo in self.gen_mat.items():
            vals = (coo.v * xblocks[bi][coo.r, coo.c]).real
            out[base:base + ngen] += np.bincount(coo.row, weights=vals, minlength=ngen)
        for bi, coo in self.gen_vec.items():
            vals = coo.v * xblocks[bi][coo.idx]
            out[base:base + ngen] += np.bincount(coo.row, weights=vals, minlength=ngen)
        return out

    def apply_AT(self, y: np.ndarray) -> list[np.ndarray]:
        """Adjoint ``A^T y`` as Hermitian matrix blocks / real vector blocks."""
        out = self.zero_blocks()
        for g, sl in zip(self.groups, self.group_slices()):
            g.scatter(out[g.block], y[sl])
        ygen = y[self.generic_start:]
        for bi, coo in self.gen_mat.items():
            # representer of Re(v X[r, c]) lives at (c, r) pre-Hermitianization
            vals = ygen[coo.row] * coo.v
            if not np.iscomplexobj(out[bi]):
                vals = vals.real
            np.add.at(out[bi], (coo.c, coo.r), vals)
        for bi, coo in self.gen_vec.items():
            np.add.at(out[bi], coo.idx, ygen[coo.row] * coo.v)
        for bi, b in enumerate(self.blocks):
            if b.is_matrix:
                out[bi] = (out[bi] + out[bi].conj().T) / 2.0
        return out

    def objective_blocks(self) -> list[np.ndarray]:
        """Objective coefficients c as Hermitianized blocks."""
        out = self.zero_blocks()
        for bi, (r, c, v) in self.obj_mat.items():
            np.add.at(out[bi], (c, r), v)
        for bi, (idx, v) in self.obj_vec.items():
            np.add.at(out[bi], idx, v)
        for bi, b in enumerate(self.blocks):
            if b.is_matrix:
                out[bi] = (out[bi] + out[bi].conj().T) / 2.0
        return out

    def objective_value(self, xblocks: list[np.ndarray]) -> float:
        total = self.obj_const
        for bi, (r, c, v) in self.obj_mat.items():
            total += float(np.sum((v * xblocks[bi][r, c]).real))
        for bi, (idx, v) in self.obj_vec.items():
            total += float(np.sum(v * xblocks[bi][idx]))
        return total

    # ----- checks -----------------------------------------------------------

    def validate(self) -> None:
        """Structural sanity: index ranges, dtypes, and block coverage."""
        nb = len(self.blocks)
        for g in self.groups:
            if not (0 <= g.block < nb) or not self.blocks[g.block].is_matrix:
                raise ValueError("trace group must sit on a matrix block")
            if self.blocks[g.block].n < g.L * g.L:
                raise ValueError("trace group grid exceeds block side")
        ngen = self.gen_rhs.size
        for bi, coo in self.gen_mat.items():
            b = self.blocks[bi]
            if not b.is_matrix:
                raise ValueError(f"matrix entries on non-matrix block {bi}")
            if coo.row.size and (coo.row.min() < 0 or coo.row.max() >= ngen):
                raise ValueError("generic row index out of range")
            if coo.r.size and (coo.r.max() >= b.n or coo.c.max() >= b.n):
                raise ValueError("matrix entry index out of range")
            if b.kind == "psd" and np.any(np.abs(np.asarray(coo.v).imag) > 0):
                raise ValueError("real PSD block got complex coefficients")
        for bi, coo in self.gen_vec.items():
            b = self.blocks[bi]
            if b.is_matrix:
                raise ValueError(f"vector entries on matrix block {bi}")
            if coo.idx.size and coo.idx.max() >= b.n:
                raise ValueError("vector entry index out of range")
        for vals in ([self.gen_rhs] + [g.rhs for g in self.groups]):
            if not np.all(np.isfinite(vals)):
                raise ValueError("non-finite right-hand side")


# ---------------------------------------------------------------------------
# Assembly of the dual semidefinite program
# ---------------------------------------------------------------------------

def assemble(y, subspace: Subspace, variant: str = "exact", zeta: float = 3.0,
             include_redundant_q: bool = True) -> ConicProblem:
    """Build the conic form of the dual program for samples ``y``.

    ``variant='exact'`` maximizes ``<q, y>_R``; ``variant='noisy'`` maximizes
    ``<q, y>_R - zeta ||q||_2`` via a second-order-cone epigraph variable.
    Both share the semidefinite sup-norm certificate structure: the bordered
    block ``[[Q, Qhat^H], [Qhat, I_K]]`` with ``(2L-1)^2`` trace rows on the
    Gram part and coupling rows tying ``Qhat`` entries to ``q``.  With
    ``include_redundant_q`` a standalone copy of the Gram block (its own PSD
    block plus duplicate trace rows) mirrors the textbook constraint list;
    it is mathematically redundant and can be dropped for speed.

    The problem is canonical minimization; ``solve_dual`` flips the sign back.
    """
    y_arr = y.y if isinstance(y, Observation) else np.asarray(y, dtype=complex).ravel()
    L, K = subspace.L, subspace.K
    if y_arr.size != L:
        raise ValueError(f"observation length {y_arr.size} != subspace length {L}")
    if variant not in ("exact", "noisy"):
        raise ValueError(f"unknown variant {variant!r}")
    N = subspace.N
    nq = L * L  # Gram side
    nb = nq + K  # bordered side

    blocks = []
    if variant == "exact":
        blocks.append(BlockSpec("free", 2 * L))
        q_off = 0
    else:
        blocks.append(BlockSpec("soc", 1 + 2 * L))
        q_off = 1
    bordered = len(blocks)
    blocks.append(BlockSpec("psd_complex", nb))
    groups = [TraceGroup(block=bordered, L=L)]
    if include_redundant_q:
        blocks.append(BlockSpec("psd_complex", nq))
        groups.append(TraceGroup(block=bordered + 1, L=L))

    # coupling rows: X[nq + i, (p,k)] = q_p * m[i, p, k], two real rows each
    freqs = np.arange(-N, N + 1)
    phase = np.exp(2j * np.pi * np.outer(freqs, freqs) / L)  # [p, k]
    ghat = _row_dfts(subspace)  # (L, K)
    mcoef = phase[None, :, :] * ghat.T[:, None, :] / L  # [i, p, k]

    ii, pp, kk = np.meshgrid(np.arange(K), np.arange(L), np.arange(L), indexing="ij")
    ii, pp, kk = ii.ravel(), pp.ravel(), kk.ravel()
    ncpl = ii.size  # K L^2 complex rows -> 2 K L^2 real rows
    re_rows = 2 * np.arange(ncpl)
    im_rows = re_rows + 1

    mat_row = np.concatenate([re_rows, im_rows])
    mat_r = np.tile(nq + ii, 2)
    mat_c = np.tile(pp * L + kk, 2)
    mat_v = np.concatenate([np.ones(ncpl, complex), np.full(ncpl, -1j)])

    mflat = mcoef[ii, pp, kk]
    vec_row = np.concatenate([re_rows, re_rows, im_rows, im_rows])
    vec_idx = np.concatenate([q_off + pp, q_off + L + pp, q_off + pp, q_off + L + pp])
    vec_val = np.concatenate([-mflat.real, mflat.imag, -mflat.imag, -mflat.real])

    # border identity rows: X[nq+i, nq+i'] = delta_{ii'} for i >= i'
    b_r, b_c, b_v, b_rhs = [], [], [], []
    for i in range(K):
        for ip in range(i + 1):
            b_r.append(nq + i)
            b_c.append(nq + ip)
            b_v.append(1.0 + 0j)
            b_rhs.append(1.0 if i == ip else 0.0)
            if i != ip:
                b_r.append(nq + i)
                b_c.append(nq + ip)
                b_v.append(-1j)
                b_rhs.append(0.0)
    nbord = len(b_rhs)
    mat_row = np.concatenate([mat_row, 2 * ncpl + np.arange(nbord)])
    mat_r = np.concatenate([mat_r, b_r])
    mat_c = np.concatenate([mat_c, b_c])
    mat_v = np.concatenate([mat_v, b_v])

    gen_rhs = np.concatenate([np.zeros(2 * ncpl), b_rhs])

    obj_idx = q_off + np.arange(2 * L)
    obj_val = np.concatenate([-y_arr.real, -y_arr.imag])
    if variant == "noisy":
        obj_idx = np.concatenate([[0], obj_idx])
        obj_val = np.concatenate([[zeta], obj_val])

    trace_targets = np.zeros((2 * L - 1) ** 2)
    trace_targets[(2 * L - 1) ** 2 // 2] = 1.0  # offset (0, 0) in row-major order

    problem = ConicProblem(
        blocks=blocks,
        groups=groups,
        gen_rhs=gen_rhs,
        gen_mat={bordered: MatCOO(row=mat_row.astype(np.intp), r=mat_r.astype(np.intp),
                                  c=mat_c.astype(np.intp), v=mat_v)},
        gen_vec={0: VecCOO(row=vec_row.astype(np.intp), idx=vec_idx.astype(np.intp),
                           v=vec_val)},
        obj_vec={0: (obj_idx.astype(np.intp), obj_val)},
        meta={
            "L": L, "K": K, "variant": variant, "zeta": zeta,
            "include_redundant_q": include_redundant_q,
            "bordered_block": bordered,
            "q_layout": {"block": 0, "re": q_off, "im": q_off + L},
            "trace_targets": trace_targets,
            "y": y_arr,
        },
    )
    problem.validate()
    return problem


# ---------------------------------------------------------------------------
# Real symmetric embedding
# ---------------------------------------------------------------------------

def embed_hermitian(A: np.ndarray) -> np.ndarray:
    """Real symmetric embedding ``[[Re A, -Im A], [Im A, Re A]]``."""
    A = np.asarray(A, dtype=complex)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def unembed_hermitian(M: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed_hermitian` (averages the two embedded copies)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0] // 2
    re = (M[:n, :n] + M[n:, n:]) / 2.0
    im = (M[n:, :n] - M[:n, n:]) / 2.0
    return re + 1j * im


# ---------------------------------------------------------------------------
# Sparse triplet text format
# ---------------------------------------------------------------------------

_FORMAT_TAG = "conic-triplet/1"


def _hermitianized_entries(r, c, v, scale=1.0):
    """Accumulate B-entries into the Hermitian part ``(B + B^H)/2`` as a dict."""
    acc: dict[tuple[int, int], complex] = {}
    for ri, ci, vi in zip(np.asarray(r).tolist(), np.asarray(c).tolist(),
                          np.asarray(v).tolist()):
        vi = complex(vi) * scale
        acc[(ri, ci)] = acc.get((ri, ci), 0.0) + vi / 2.0
        acc[(ci, ri)] = acc.get((ci, ri), 0.0) + vi.conjugate() / 2.0
    return acc


def _embedded_entries(acc: dict, n: int, complex_block: bool):
    """Yield sorted real triplets; complex blocks expand to the 2n embedding.

    Embedded functionals satisfy ``Tr(Atilde Xtilde) = 2 Re Tr(A X)``, so
    entries carry a factor 1/2 to keep functional values (and the rhs)
    unchanged — this is the documented export convention.
    """
    out: dict[tuple[int, int], float] = {}
    for (i, j), val in acc.items():
        if not complex_block:
            out[(i, j)] = out.get((i, j), 0.0) + val.real
            continue
        # embed the conjugate so plain entrywise sums reproduce the functional
        a, b = val.real / 2.0, -val.imag / 2.0
        for key, x in (((i, j), a), ((i + n, j + n), a),
                       ((i, j + n), -b), ((i + n, j), b)):
            if x != 0.0:
                out[key] = out.get(key, 0.0) + x
    return sorted((i, j, v) for (i, j), v in out.items() if v != 0.0)


def export_conic(problem: ConicProblem, path=None) -> str:
    """Write the problem as sparse triplet text ``(block, row, col, value)``.

    Complex Hermitian blocks are materialized in the real symmetric embedding
    (dims doubled, entry values halved so every functional keeps its value);
    structured trace groups are expanded to plain rows.  Vector blocks use
    column 0.  The format round-trips bit-exactly through
    :func:`import_conic` / :func:`export_conic`.
    """
    lines = [f"p {_FORMAT_TAG}", "s min"]
    for bi, b in enumerate(problem.blocks):
        kind = "psd" if b.kind == "psd_complex" else b.kind
        lines.append(f"k {bi} {kind} {b.embedded_dim}")
    lines.append(f"m {problem.m}")

    def emit_matrix_rows(row_base, bi, per_row_entries):
        cplx = problem.blocks[bi].kind == "psd_complex"
        n = problem.blocks[bi].n
        for offset, (r, c, v) in per_row_entries:
            acc = _hermitianized_entries(r, c, v)
            for i, j, val in _embedded_entries(acc, n, cplx):
                lines.append(f"a {row_base + offset} {bi} {i} {j} {val!r}")

    # rows are emitted in ascending global row order: groups then generic
    row0 = 0
    for g in problem.groups:
        trips = g.to_triplets(problem.blocks[g.block].n)
        emit_a = []
        for local, (r, c, v) in enumerate(trips):
            emit_a.append((local, (r, c, v)))
        emit_matrix_rows(row0, g.block, emit_a)
        row0 += g.nrows

    gen_entries: dict[int, dict[int, list]] = {}
    for bi, coo in problem.gen_mat.items():
        for t in range(coo.row.size):
            gen_entries.setdefault(int(coo.row[t]), {}).setdefault(bi, []).append(
                (int(coo.r[t]), int(coo.c[t]), complex(coo.v[t])))
    vec_entries: dict[int, dict[int, list]] = {}
    for bi, coo in problem.gen_vec.items():
        for t in range(coo.row.size):
            vec_entries.setdefault(int(coo.row[t]), {}).setdefault(bi, []).append(
                (int(coo.idx[t]), float(coo.v[t])))
    for local in range(problem.gen_rhs.size):
        for bi, ents in sorted(gen_entries.get(local, {}).items()):
            r = [e[0] for e in ents]
            c = [e[1] for e in ents]
            v = [e[2] for e in ents]
            cplx = problem.blocks[bi].kind == "psd_complex"
            acc = _hermitianized_entries(r, c, v)
            for i, j, val in _embedded_entries(acc, problem.blocks[bi].n, cplx):
                lines.append(f"a {row0 + local} {bi} {i} {j} {val!r}")
        for bi, ents in sorted(vec_entries.get(local, {}).items()):
            for idx, val in sorted(ents):
                lines.append(f"a {row0 + local} {bi} {idx} 0 {val!r}")

    rhs = problem.rhs_full()
    for i in np.nonzero(rhs)[0]:
        lines.append(f"b {i} {float(rhs[i])!r}")

    for bi, (r, c, v) in sorted(problem.obj_mat.items()):
        cplx = problem.blocks[bi].kind == "psd_complex"
        acc = _hermitianized_entries(r, c, v)
        for i, j, val in _embedded_entries(acc, problem.blocks[bi].n, cplx):
            lines.append(f"c {bi} {i} {j} {val!r}")
    for bi, (idx, v) in sorted(problem.obj_vec.items()):
        order = np.argsort(idx, kind="stable")
        for t in order:
            if v[t] != 0.0:
                lines.append(f"c {bi} {int(idx[t])} 0 {float(v[t])!r}")
    if problem.obj_const != 0.0:
        lines.append(f"z {problem.obj_const!r}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def import_conic(source) -> ConicProblem:
    """Parse the sparse triplet text format back into a :class:`ConicProblem`.

    Complex blocks were embedded on export, so the imported problem is all
    real; it is solve-equivalent to the original (same optimal value).
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        try:
            with open(source) as fh:
                text = fh.read()
        except (OSError, ValueError):
            text = str(source)
    blocks: list[BlockSpec] = []
    m = 0
    a_entries: list[tuple[int, int, int, int, float]] = []
    b_entries: dict[int, float] = {}
    c_entries: list[tuple[int, int, int, float]] = []
    const = 0.0
    for line in io.StringIO(text):
        parts = line.split()
        if not parts or parts[0] == "#":
            continue
        tag = parts[0]
        if tag == "p":
            if parts[1] != _FORMAT_TAG:
                raise ValueError(f"unsupported format {parts[1]!r}")
        elif tag == "s":
            if parts[1] != "min":
                raise ValueError("only minimization problems are supported")
        elif tag == "k":
            bi, kind, dim = int(parts[1]), parts[2], int(parts[3])
            if bi != len(blocks):
                raise ValueError("block lines out of order")
            blocks.append(BlockSpec(kind, dim))
        elif tag == "m":
            m = int(parts[1])
        elif tag == "a":
            a_entries.append((int(parts[1]), int(parts[2]), int(parts[3]),
                              int(parts[4]), float(parts[5])))
        elif tag == "b":
            b_entries[int(parts[1])] = float(parts[2])
        elif tag == "c":
            c_entries.append((int(parts[1]), int(parts[2]), int(parts[3]),
                              float(parts[4])))
        elif tag == "z":
            const = float(parts[1])
        else:
            raise ValueError(f"unknown record {tag!r}")

    gen_rhs = np.zeros(m)
    for i, val in b_entries.items():
        gen_rhs[i] = val
    gen_mat: dict[int, MatCOO] = {}
    gen_vec: dict[int, VecCOO] = {}
    for bi in range(len(blocks)):
        ents = [(row, r, c, v) for (row, bb, r, c, v) in a_entries if bb == bi]
        if not ents:
            continue
        rows = np.array([e[0] for e in ents], dtype=np.intp)
        rr = np.array([e[1] for e in ents], dtype=np.intp)
        cc = np.array([e[2] for e in ents], dtype=np.intp)
        vv = np.array([e[3] for e in ents], dtype=float)
        if blocks[bi].is_matrix:
            gen_mat[bi] = MatCOO(row=rows, r=rr, c=cc, v=vv.astype(complex))
        else:
            gen_vec[bi] = VecCOO(row=rows, idx=rr, v=vv)
    obj_mat = {}
    obj_vec = {}
    for bi in range(len(blocks)):
        ents = [(r, c, v) for (bb, r, c, v) in c_entries if bb == bi]
        if not ents:
            continue
        rr = np.array([e[0] for e in ents], dtype=np.intp)
        cc = np.array([e[1] for e in ents], dtype=np.intp)
        vv = np.array([e[2] for e in ents], dtype=float)
        if blocks[bi].is_matrix:
            obj_mat[bi] = (rr, cc, vv.astype(complex))
        else:
            obj_vec[bi] = (rr, vv)
    problem = ConicProblem(blocks=blocks, groups=[], gen_rhs=gen_rhs,
                           gen_mat=gen_mat, gen_vec=gen_vec,
                           obj_mat=obj_mat, obj_vec=obj_vec, obj_const=const)
    problem.validate()
    return problem


# ---------------------------------------------------------------------------
# High-level solve and diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualSolution:
    """Solved dual variables with KKT diagnostics.

    ``objective`` is in maximization form (``<q, y>_R`` for the exact variant,
    ``<q, y>_R - zeta ||q||_2`` for the noisy one).
    """

    q: np.ndarray
    Q: np.ndarray
    objective: float
    status: str
    kkt: dict
    iterations: int
    log: list
    meta: dict


def solve_dual(problem: ConicProblem, options=None) -> DualSolution:
    """Run the interior-point solver and unpack the dual variables."""
    from .solver import SolverOptions, solve_conic

    res = solve_conic(problem, options or SolverOptions())
    meta = problem.meta
    lay = meta["q_layout"]
    L = meta["L"]
    qb = res.x[lay["block"]]
    q = qb[lay["re"]:lay["re"] + L] + 1j * qb[lay["im"]:lay["im"] + L]
    Xb = res.x[meta["bordered_block"]]
    nq = L * L
    Q = np.asarray(Xb)[:nq, :nq]
    objective = -res.primal_objective
    kkt = {"primal_residual": res.primal_residual,
           "dual_residual": res.dual_residual,
           "gap": res.gap}
    return DualSolution(q=q, Q=Q, objective=objective, status=res.status,
                        kkt=kkt, iterations=res.iterations, log=res.log,
                        meta=dict(meta))


@dataclass(frozen=True)
class Prop1Report:
    """Interpolation/boundedness diagnostics of a solved dual vector."""

    interp_residuals: np.ndarray
    off_support_sup: float
    sigma_min: float
    grid: int
    exclusion_radius: float


def check_prop1(q: np.ndarray, scene, subspace: Subspace, grid: int = 512,
                exclusion_radius: float | None = None) -> Prop1Report:
    """Check the solved dual polynomial against the scene it should certify.

    Reports ``||f(r_j) - sign(c_j) h_j||_2`` per source, the maximum of
    ``||f||_2`` over grid nodes outside wraparound balls of
    ``exclusion_radius`` (default ``0.2447 / N``) around the support, and the
    smallest singular value of the least-squares matrix at the true shifts.
    An empty scene is vacuously certified.
    """
    from .estimate import build_ls_matrix
    from .localize import build_polynomial, eval_grid

    N = subspace.N
    if exclusion_radius is None:
        exclusion_radius = 0.2447 / N
    if scene.R == 0:
        return Prop1Report(interp_residuals=np.zeros(0), off_support_sup=0.0,
                           sigma_min=np.inf, grid=grid,
                           exclusion_radius=exclusion_radius)
    poly = build_polynomial(q, subspace)
    res = np.empty(scene.R)
    for j, (s, c, h) in enumerate(zip(scene.shifts, scene.gains, scene.directions)):
        fval = poly.eval_at(s.tau, s.f)
        res[j] = np.linalg.norm(fval - (c / abs(c)) * h)
    vals = eval_grid(poly, grid)
    nodes = np.arange(grid) / grid
    mask = np.ones((grid, grid), dtype=bool)
    for s in scene.shifts:
        dt = np.abs(nodes - s.tau)
        dt = np.minimum(dt, 1 - dt)
        df = np.abs(nodes - s.f)
        df = np.minimum(df, 1 - df)
        mask &= np.maximum(dt[:, None], df[None, :]) > exclusion_radius
    off_sup = float(np.sqrt(vals[mask].max())) if mask.any() else 0.0
    ls = build_ls_matrix([s.as_tuple() for s in scene.shifts], subspace)
    return Prop1Report(interp_residuals=res, off_support_sup=off_sup,
                       sigma_min=ls.sigma_min, grid=grid,
                       exclusion_radius=exclusion_radius)
