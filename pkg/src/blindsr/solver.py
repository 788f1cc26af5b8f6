"""Homogeneous self-dual interior-point solver for block conic programs.

Solves ``min c.x  s.t.  A x = b,  x in K`` where ``K`` is a product of free,
second-order, and (real or complex Hermitian) positive-semidefinite blocks,
using Nesterov-Todd scalings and a Mehrotra predictor-corrector in the
homogeneous self-dual embedding, so primal/dual infeasibility is detected by
the same iteration that solves well-posed problems.

Each Newton step reduces to a dense symmetric Schur system in the row
multipliers (bordered by the free-variable columns).  Assembling that Schur
matrix is the dominant cost and exploits problem structure when available:

* all pairings between rows of a Toeplitz-offset trace group are gathered
  from a single padded 4-D FFT autocorrelation of the scaled block;
* pairings between a trace group and single-entry rows use batched 2-D FFT
  cross-correlations of the scaled block's rows and columns;
* single-entry x single-entry pairings are chunked elementwise gathers.

Blocks without those tags (e.g. problems reimported from the triplet text
format) fall back to a generic dense per-row path, which is exact but slow
for large blocks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg as sla

from .dualsdp import ConicProblem

__all__ = [
    "SolverOptions",
    "SolverResult",
    "nearest_psd_projection",
    "solve_conic",
    "write_solver_log",
]


@dataclass(frozen=True)
class SolverOptions:
    """Interior-point tolerances and step policy."""

    tol_gap: float = 1e-8
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    tol_reduced: float = 1e-6   # stalled runs at or below this report optimal_inaccurate
    max_iter: int = 200
    step_fraction: float = 0.99
    reg: float = 1e-12          # static Schur diagonal regularization (relative)
    infeas_ratio: float = 1e-8  # tau/kappa collapse threshold for ray detection
    schur_mode: str = "auto"    # auto | fast | generic
    refine_steps: int = 1       # iterative-refinement passes on the KKT solves
    verbose: bool = False


@dataclass
class SolverResult:
    """Solver outcome; ``x``/``y``/``z`` are de-homogenized when solved."""

    status: str
    x: list  # block variables (divided by tau when status == "optimal")
    y: np.ndarray
    z: list
    primal_objective: float
    dual_objective: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    tau: float
    kappa: float
    log: list = field(default_factory=list)


def nearest_psd_projection(A: np.ndarray, sym_tol: float = 1e-8) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (eigenvalue clamping).

    Rejects inputs that are not symmetric/Hermitian within ``sym_tol``
    relative to their norm.  Idempotent: projecting a PSD matrix returns it.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.linalg.norm(A)))
    if np.linalg.norm(A - A.conj().T) > sym_tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    H = (A + A.conj().T) / 2.0
    w, V = np.linalg.eigh(H)
    w = np.maximum(w, 0.0)
    out = (V * w) @ V.conj().T
    return (out + out.conj().T) / 2.0


def write_solver_log(log: list, path) -> None:
    """Write the iteration log as CSV with columns iter,gap,pres,dres,step."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "gap", "pres", "dres", "step"])
        for rec in log:
            writer.writerow([rec["iter"]] +
                            [repr(float(rec[k]))
                             for k in ("gap", "pres", "dres", "step")])


# ---------------------------------------------------------------------------
# Cone helpers
# ---------------------------------------------------------------------------

def _soc_jmul(v: np.ndarray) -> np.ndarray:
    out = -v.copy()
    out[0] = v[0]
    return out


def _soc_jquad(v: np.ndarray) -> float:
    return float(v[0] * v[0] - v[1:] @ v[1:])


def _soc_prod(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Jordan product on the second-order cone."""
    out = u[0] * v
    out[0] = u @ v
    out[1:] += v[0] * u[1:]
    return out


def _soc_solve(lam: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve ``lam o u = d`` (arrow-matrix inverse)."""
    lam0, lam1 = lam[0], lam[1:]
    det = lam0 * lam0 - lam1 @ lam1
    u0 = (lam0 * d[0] - lam1 @ d[1:]) / det
    u1 = (d[1:] - u0 * lam1) / lam0
    return np.concatenate([[u0], u1])


def _soc_step_bound(x: np.ndarray, d: np.ndarray) -> float:
    """Largest ``a`` with ``x + t d`` in the cone for all ``t < a``."""
    a = _soc_jquad(d)
    b = float(x[0] * d[0] - x[1:] @ d[1:])
    c = _soc_jquad(x)
    if a >= 0.0 and b >= 0.0:
        return np.inf
    disc = b * b - a * c
    if a >= 0.0 and disc < 0.0:
        return np.inf
    disc = max(disc, 0.0)
    if a == 0.0:
        root = -c / (2.0 * b) if b < 0 else np.inf
    else:
        root = (-b - np.sqrt(disc)) / a if a < 0 else \
            (c / (-b + np.sqrt(disc)) if b < 0 else np.inf)
    return root if root > 0 else 0.0


class _SOCScale:
    """Nesterov-Todd scaling data for one second-order block."""

    def __init__(self, x: np.ndarray, z: np.ndarray):
        sx = np.sqrt(_soc_jquad(x))
        sz = np.sqrt(_soc_jquad(z))
        xb, zb = x / sx, z / sz
        gamma = np.sqrt((1.0 + xb @ zb) / 2.0)
        self.wbar = (xb + _soc_jmul(zb)) / (2.0 * gamma)
        self.eta = np.sqrt(sx / sz)
        a, q = self.wbar[0], self.wbar[1:]
        d = x.size
        Wb = np.empty((d, d))
        Wb[0, 0] = a
        Wb[0, 1:] = q
        Wb[1:, 0] = q
        Wb[1:, 1:] = np.eye(d - 1) + np.outer(q, q) / (1.0 + a)
        self.W = self.eta * Wb
        J = np.ones(d)
        J[1:] = -1.0
        self.Winv = (Wb * J[None, :] * J[:, None]) / self.eta  # J Wb J / eta
        self.lam = self.W @ z

    def scale_x(self, dx):     # W^{-1} dx
        return self.Winv @ dx

    def scale_z(self, dz):     # W dz
        return self.W @ dz

    def phi(self, v):          # W^{-1} W^{-1} v
        return self.Winv @ (self.Winv @ v)

    def phi_inv(self, v):      # W W v
        return self.W @ (self.W @ v)

    def unscale_to_z(self, u):  # W^{-1} u
        return self.Winv @ u


class _PSDScale:
    """Nesterov-Todd scaling data for one PSD block (real or Hermitian)."""

    def __init__(self, X: np.ndarray, Z: np.ndarray):
        Lx = np.linalg.cholesky(X)
        Lz = np.linalg.cholesky(Z)
        U, s, Vh = np.linalg.svd(Lz.conj().T @ Lx)
        sr = np.sqrt(s)
        self.lam = s
        self.R = Lx @ (Vh.conj().T / sr[None, :])
        self.Rinv = (U / sr[None, :]).conj().T @ Lz.conj().T
        self.W = self.R @ self.R.conj().T
        self.Winv = self.Rinv.conj().T @ self.Rinv
        self.Lx = Lx
        self.Lz = Lz

    def scale_x(self, dX):     # R^{-1} dX R^{-H}
        return self.Rinv @ dX @ self.Rinv.conj().T

    def scale_z(self, dZ):     # R^H dZ R
        return self.R.conj().T @ dZ @ self.R

    def phi(self, V):          # W^{-1} V W^{-1}
        return self.Winv @ V @ self.Winv

    def phi_inv(self, V):      # W V W
        return self.W @ V @ self.W

    def unscale_to_z(self, Us):  # R^{-H} Us R^{-1}
        return self.Rinv.conj().T @ Us @ self.Rinv


def _psd_step_bound(L: np.ndarray, dX: np.ndarray) -> float:
    """Largest step keeping ``X + t dX`` PSD, via the factored pencil."""
    T1 = sla.solve_triangular(L, dX, lower=True, check_finite=False)
    T2 = sla.solve_triangular(L, T1.conj().T, lower=True, check_finite=False)
    emin = float(np.linalg.eigvalsh((T2 + T2.conj().T) / 2.0).min())
    if emin >= 0.0:
        return np.inf
    return -1.0 / emin


# ---------------------------------------------------------------------------
# Structured Schur assembly
# ---------------------------------------------------------------------------

class _PSDSchur:
    """Schur-contribution engine for one PSD block of a fixed problem."""

    def __init__(self, problem: ConicProblem, bi: int, mode: str):
        self.bi = bi
        self.n = problem.blocks[bi].n
        self.groups = [(g, sl) for g, sl in zip(problem.groups, problem.group_slices())
                       if g.block == bi]
        coo = problem.gen_mat.get(bi)
        base = problem.generic_start
        if coo is None or coo.row.size == 0:
            self.rows_gid = np.zeros(0, dtype=np.intp)
            self.single = True
            self.r = self.c = np.zeros(0, dtype=np.intp)
            self.v = np.zeros(0, dtype=complex)
        else:
            order = np.argsort(coo.row, kind="stable")
            rows = coo.row[order]
            uniq, counts = np.unique(rows, return_counts=True)
            self.single = bool(np.all(counts == 1))
            if self.single:
                self.rows_gid = base + rows
                self.r = coo.r[order]
                self.c = coo.c[order]
                self.v = coo.v[order].astype(complex)
            else:
                self.rows_gid = base + uniq
                self._coo = (rows, coo.r[order], coo.c[order],
                             coo.v[order].astype(complex))
        # the generic (dense per-row) path is kept for multi-entry rows,
        # multiple groups on one block, or when explicitly requested
        eligible = self.single and len(self.groups) <= 1
        if mode == "fast":
            self.fast = True
        elif mode == "generic":
            self.fast = False
        else:
            self.fast = eligible
        if self.fast and not eligible:
            raise ValueError("fast Schur path requested for untagged rows")
        self._acf_cache = None

    # -- dense helpers (exact on any structure) ------------------------------

    def _row_matrix(self, which) -> np.ndarray:
        """Hermitian representer of one row (group or generic) — debug/generic."""
        n = self.n
        B = np.zeros((n, n), dtype=complex)
        kind, payload = which
        if kind == "group":
            g, local = payload
            s = g.row_to_side[local]
            d1, d2 = g.onesided[s]
            L = g.L
            a = np.arange(max(0, -d1), L - max(0, d1))
            b = np.arange(max(0, -d2), L - max(0, d2))
            A, Bm = np.meshgrid(a, b, indexing="ij")
            rows = ((A + d1) * L + (Bm + d2)).ravel()
            cols = (A * L + Bm).ravel()
            val = 1.0 + 0j if g.parts[local] == 0 else -1j
            np.add.at(B, (cols, rows), val)  # representers live transposed
        else:
            r, c, v = payload
            np.add.at(B, (c, r), v)
        return (B + B.conj().T) / 2.0

    def _generic_rows(self):
        out = []
        for g, sl in self.groups:
            for local in range(g.nrows):
                out.append((sl.start + local, ("group", (g, local))))
        if self.single:
            for t in range(self.rows_gid.size):
                out.append((self.rows_gid[t],
                            ("gen", ([self.r[t]], [self.c[t]], [self.v[t]]))))
        elif self.rows_gid.size:
            rows, r, c, v = self._coo
            for gi, row in zip(self.rows_gid, np.unique(rows)):
                sel = rows == row
                out.append((gi, ("gen", (r[sel], c[sel], v[sel]))))
        return out

    def accumulate_generic(self, M: np.ndarray, W: np.ndarray) -> None:
        if not hasattr(self, "_reps"):
            rows = self._generic_rows()
            self._reps = ([gi for gi, _ in rows],
                          [self._row_matrix(w) for _, w in rows])
        gids, reps = self._reps
        for i, gi in enumerate(gids):
            Ui = W @ reps[i] @ W
            for j in range(i, len(gids)):
                gj = gids[j]
                val = float(np.vdot(reps[j], Ui).real)
                M[gi, gj] += val
                if gi != gj:
                    M[gj, gi] += val

    # -- fast structured path -------------------------------------------------

    def _acf_indices(self, g):
        if self._acf_cache is not None:
            return self._acf_cache
        L = g.L
        P = scipy.fft.next_fast_len(2 * L - 1)
        side = g.onesided
        a1 = side[:, 0][:, None]
        a2 = side[:, 1][:, None]
        b1 = side[:, 0][None, :]
        b2 = side[:, 1][None, :]

        def flat(s1, s2, t1, t2):
            return ((s1 % P) * P**3 + (s2 % P) * P**2 + (t1 % P) * P + (t2 % P))

        idx = {
            "pp": flat(-a1, -a2, b1, b2),    # T(a, b)  = ACF(-a, b)
            "pm": flat(-a1, -a2, -b1, -b2),  # T(a, -b)
            "mp": flat(a1, a2, b1, b2),      # T(-a, b)
            "mm": flat(a1, a2, -b1, -b2),    # T(-a, -b)
        }
        re_idx = np.nonzero(g.parts == 0)[0]
        im_idx = np.nonzero(g.parts == 1)[0]
        self._acf_cache = (P, idx, re_idx, im_idx)
        return self._acf_cache

    def _accumulate_group_fast(self, M: np.ndarray, W: np.ndarray, g, sl) -> None:
        L = g.L
        nq = L * L
        P, idx, re_idx, im_idx = self._acf_indices(g)
        W4 = np.zeros((P, P, P, P), dtype=complex)
        W4[:L, :L, :L, :L] = W[:nq, :nq].reshape(L, L, L, L)
        F = scipy.fft.fftn(W4, workers=1)
        acf = scipy.fft.ifftn(F * F.conj(), workers=1).ravel()
        Tpp = acf[idx["pp"]]
        Tpm = acf[idx["pm"]]
        Tmp = acf[idx["mp"]]
        Tmm = acf[idx["mm"]]
        ReRe = 0.25 * (Tpp + Tpm + Tmp + Tmm).real
        ReIm = -0.25 * (Tpp - Tpm + Tmp - Tmm).imag
        ImRe = -0.25 * (Tpp + Tpm - Tmp - Tmm).imag
        ImIm = -0.25 * (Tpp - Tpm - Tmp + Tmm).real
        big = np.empty((g.nrows, g.nrows))
        side_of = g.row_to_side
        rmask = re_idx
        imask = im_idx
        big[np.ix_(rmask, rmask)] = ReRe[np.ix_(side_of[rmask], side_of[rmask])]
        big[np.ix_(rmask, imask)] = ReIm[np.ix_(side_of[rmask], side_of[imask])]
        big[np.ix_(imask, rmask)] = ImRe[np.ix_(side_of[imask], side_of[rmask])]
        big[np.ix_(imask, imask)] = ImIm[np.ix_(side_of[imask], side_of[imask])]
        M[sl, sl] += big

    def _accumulate_cross_fast(self, M: np.ndarray, W: np.ndarray, g, sl) -> None:
        if self.rows_gid.size == 0:
            return
        L = g.L
        nq = L * L
        P, _, re_idx, im_idx = self._acf_indices(g)
        side = g.onesided
        d1 = side[:, 0] % P
        d2 = side[:, 1] % P
        flat_off = d1 * P + d2

        uniq_r, inv_r = np.unique(self.r, return_inverse=True)
        uniq_c, inv_c = np.unique(self.c, return_inverse=True)
        rows_grid = np.zeros((uniq_r.size, P, P), dtype=complex)
        rows_grid[:, :L, :L] = W[uniq_r, :nq].reshape(-1, L, L)
        cols_grid = np.zeros((uniq_c.size, P, P), dtype=complex)
        cols_grid[:, :L, :L] = W[:nq, uniq_c].T.reshape(-1, L, L)
        Fr_g = scipy.fft.fft2(rows_grid, workers=1)
        Fc_g = scipy.fft.fft2(cols_grid, workers=1)
        Fr_f = scipy.fft.fft2(rows_grid.conj(), workers=1).conj()
        Fc_f = scipy.fft.fft2(cols_grid.conj(), workers=1).conj()

        nrows = self.rows_gid.size
        vals_re = np.empty((nrows, side.shape[0]))
        vals_im = np.empty((nrows, side.shape[0]))
        chunk = max(1, int(2**20 // (P * P)))
        for lo in range(0, nrows, chunk):
            hi = min(nrows, lo + chunk)
            # S[d]  = sum_z W[r, z+d] W[z, c]  = CORR(col_c, row_r)
            S = scipy.fft.ifft2(Fc_f[inv_c[lo:hi]] * Fr_g[inv_r[lo:hi]],
                                workers=1).reshape(hi - lo, -1)[:, flat_off]
            # S'[d] = sum_z W[r, z] W[z+d, c]  = CORR(row_r, col_c)
            Sp = scipy.fft.ifft2(Fr_f[inv_r[lo:hi]] * Fc_g[inv_c[lo:hi]],
                                 workers=1).reshape(hi - lo, -1)[:, flat_off]
            v = self.v[lo:hi, None]
            vals_re[lo:hi] = 0.5 * (v * (S + Sp)).real
            vals_im[lo:hi] = -0.5 * (v * (S - Sp)).imag

        side_of = g.row_to_side
        block = np.empty((nrows, g.nrows))
        block[:, re_idx] = vals_re[:, side_of[re_idx]]
        block[:, im_idx] = vals_im[:, side_of[im_idx]]
        M[self.rows_gid, sl] += block
        M[sl.start:sl.stop, :][:, self.rows_gid] += block.T

    def _accumulate_sparse_fast(self, M: np.ndarray, W: np.ndarray) -> None:
        ns = self.rows_gid.size
        if ns == 0:
            return
        r, c, v = self.r, self.c, self.v
        gid = self.rows_gid
        Wt = W.T
        chunk = max(1, int(2**21 // max(ns, 1)))
        for lo in range(0, ns, chunk):
            hi = min(ns, lo + chunk)
            # T1 = v_i v_j W[r_i, c_j] W[r_j, c_i]
            G1 = W[np.ix_(r[lo:hi], c)]
            G1T = Wt[np.ix_(c[lo:hi], r)]
            T = (v[lo:hi, None] * v[None, :]) * G1 * G1T
            # T2 = v_i conj(v_j) W[r_i, r_j] W[c_j, c_i]
            G2 = W[np.ix_(r[lo:hi], r)]
            G3 = Wt[np.ix_(c[lo:hi], c)]
            T += (v[lo:hi, None] * v.conj()[None, :]) * G2 * G3
            M[np.ix_(gid[lo:hi], gid)] += 0.5 * T.real

    def accumulate(self, M: np.ndarray, W: np.ndarray) -> None:
        if not self.fast:
            self.accumulate_generic(M, W)
            return
        for g, sl in self.groups:
            self._accumulate_group_fast(M, W, g, sl)
            self._accumulate_cross_fast(M, W, g, sl)
        self._accumulate_sparse_fast(M, W)


# ---------------------------------------------------------------------------
# Main solver
# ---------------------------------------------------------------------------

class _Workspace:
    def __init__(self, problem: ConicProblem, opts: SolverOptions):
        problem.validate()
        self.problem = problem
        self.opts = opts
        self.blocks = problem.blocks
        self.m = problem.m
        self.b = problem.rhs_full()
        self.cblocks = problem.objective_blocks()
        self.free = [i for i, b in enumerate(self.blocks) if b.kind == "free"]
        self.cone = [i for i, b in enumerate(self.blocks) if b.kind != "free"]
        self.cone_set = set(self.cone)
        self.nu = sum(b.n if b.is_matrix else 1
                      for b in self.blocks if b.kind != "free")
        if self.nu == 0:
            raise ValueError("problem has no cone variables")

        # dense free-column matrix
        nf_list = [(bi, self.blocks[bi].n) for bi in self.free]
        self.nf = sum(n for _, n in nf_list)
        self.free_offsets = {}
        off = 0
        for bi, n in nf_list:
            self.free_offsets[bi] = off
            off += n
        self.Af = np.zeros((self.m, self.nf))
        base = problem.generic_start
        for bi in self.free:
            coo = problem.gen_vec.get(bi)
            if coo is not None:
                np.add.at(self.Af, (base + coo.row, self.free_offsets[bi] + coo.idx),
                          coo.v)

        # SOC static structures
        self.soc_rows: dict[int, tuple] = {}
        for bi in self.cone:
            if self.blocks[bi].kind != "soc":
                continue
            coo = problem.gen_vec.get(bi)
            if coo is None or coo.row.size == 0:
                self.soc_rows[bi] = None
                continue
            touch = np.unique(coo.row)
            lookup = np.zeros(touch.max() + 1, dtype=np.intp)
            lookup[touch] = np.arange(touch.size)
            A = np.zeros((touch.size, self.blocks[bi].n))
            np.add.at(A, (lookup[coo.row], coo.idx), coo.v)
            J = np.ones(self.blocks[bi].n)
            J[1:] = -1.0
            AJAT = (A * J[None, :]) @ A.T
            self.soc_rows[bi] = (base + touch, A, AJAT)

        # PSD Schur engines
        self.psd_schur = {bi: _PSDSchur(problem, bi, opts.schur_mode)
                          for bi in self.cone if self.blocks[bi].is_matrix}

    # ----- block-vector algebra ---------------------------------------------

    def inner(self, xb, zb) -> float:
        total = 0.0
        for bi in self.cone:
            total += float(np.vdot(xb[bi], zb[bi]).real)
        return total

    def cone_init(self):
        x = []
        for b in self.blocks:
            if b.is_matrix:
                dtype = complex if b.kind == "psd_complex" else float
                x.append(np.eye(b.n, dtype=dtype))
            elif b.kind == "soc":
                e = np.zeros(b.n)
                e[0] = 1.0
                x.append(e)
            else:
                x.append(np.zeros(b.n))
        return x

    def free_vec(self, xblocks) -> np.ndarray:
        if self.nf == 0:
            return np.zeros(0)
        return np.concatenate([xblocks[bi] for bi in self.free])

    def set_free(self, xblocks, vec) -> None:
        for bi in self.free:
            off = self.free_offsets[bi]
            xblocks[bi] = vec[off:off + self.blocks[bi].n].copy()

    def scalings(self, x, z):
        scale = {}
        for bi in self.cone:
            if self.blocks[bi].is_matrix:
                scale[bi] = _PSDScale(x[bi], z[bi])
            else:
                scale[bi] = _SOCScale(x[bi], z[bi])
        return scale

    def schur(self, scale) -> np.ndarray:
        M = np.zeros((self.m, self.m))
        for bi in self.cone:
            b = self.blocks[bi]
            if b.is_matrix:
                self.psd_schur[bi].accumulate(M, scale[bi].W)
            else:
                info = self.soc_rows.get(bi)
                if info is None:
                    continue
                rows, A, AJAT = info
                sc = scale[bi]
                u = A @ sc.wbar
                eta2 = sc.eta ** 2
                M[np.ix_(rows, rows)] += eta2 * (2.0 * np.outer(u, u) - AJAT)
        scale_diag = 1.0 + float(np.abs(np.diag(M)).mean()) if self.m else 1.0
        M[np.diag_indices_from(M)] += self.opts.reg * scale_diag
        return M

    def phi_inv_blocks(self, scale, blocks_in):
        out = []
        for bi, val in enumerate(blocks_in):
            if bi in self.free:
                out.append(np.zeros_like(val))
            else:
                out.append(scale[bi].phi_inv(val))
        return out


def _status_metrics(ws: _Workspace, x, y, z, tau):
    problem = ws.problem
    xs = [v / tau for v in x]
    ys = y / tau
    pobj = problem.objective_value(xs)
    dobj = float(ws.b @ ys) + problem.obj_const
    rp = problem.apply_A(xs) - ws.b
    pres = float(np.linalg.norm(rp)) / (1.0 + float(np.linalg.norm(ws.b)))
    At = problem.apply_AT(ys)
    dnorm = 0.0
    cnorm = 0.0
    for bi in range(len(ws.blocks)):
        resid = ws.cblocks[bi] - At[bi] - (z[bi] / tau if bi in ws.cone_set else 0.0)
        dnorm += float(np.linalg.norm(resid)) ** 2
        cnorm += float(np.linalg.norm(ws.cblocks[bi])) ** 2
    dres = np.sqrt(dnorm) / (1.0 + np.sqrt(cnorm))
    gap = ws.inner(xs, [v / tau for v in z])
    relgap = gap / max(1.0, (abs(pobj) + abs(dobj)) / 2.0)
    return xs, ys, pobj, dobj, pres, dres, gap, relgap


def solve_conic(problem: ConicProblem, options: SolverOptions | None = None) -> SolverResult:
    """Solve a block conic program; deterministic for fixed inputs."""
    opts = options or SolverOptions()
    ws = _Workspace(problem, opts)
    m = ws.m
    b = ws.b
    c = ws.cblocks

    x = ws.cone_init()
    z = [v.copy() for v in x]  # free components stay identically zero
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    log: list[dict] = []
    best = None
    status = "max_iter"
    stall = 0
    no_progress = 0
    best_ratio = 1.0  # tau / kappa trend; tracks progress toward a Farkas point

    def residuals():
        r_p = problem.apply_A(x) - b * tau
        At = problem.apply_AT(y)
        r_d = [c[bi] * tau - At[bi] - (z[bi] if bi in ws.cone_set else 0.0)
               for bi in range(len(ws.blocks))]
        r_g = -(problem.objective_value(x) - problem.obj_const) + float(b @ y) - kappa
        return r_p, r_d, r_g

    cx_blocks = c  # alias

    for it in range(opts.max_iter):
        # --- metrics and termination -------------------------------------
        xs, ys, pobj, dobj, pres, dres, gap, relgap = _status_metrics(ws, x, y, z, tau)
        mu = (ws.inner(x, z) + tau * kappa) / (ws.nu + 1)
        if log:
            log[-1]["pres_post"] = pres
        score = max(pres, dres, relgap)
        ratio = tau / max(1.0, kappa)
        if best is None or score < 0.99 * best[0]:
            best = (score, [v.copy() for v in xs], ys.copy(),
                    [v.copy() for v in z], tau, kappa,
                    (pobj, dobj, pres, dres, relgap))
            no_progress = 0
        elif ratio < 0.5 * best_ratio:
            no_progress = 0  # still driving tau down toward an infeasibility cert
        else:
            no_progress += 1
        best_ratio = min(best_ratio, ratio)
        if pres <= opts.tol_primal and dres <= opts.tol_dual and relgap <= opts.tol_gap:
            status = "optimal"
            break
        if tau <= opts.infeas_ratio * max(1.0, kappa) and mu <= 1e-10:
            by = float(b @ y)
            cx = problem.objective_value(x) - problem.obj_const
            if by > 1e-12:
                status = "primal_infeasible"
            elif -cx > 1e-12:
                status = "dual_infeasible"
            else:
                status = "ill_posed"
            break
        if stall >= 3 or no_progress >= 5:
            status = "stalled"
            break

        # --- scaling and Schur factorization ------------------------------
        try:
            scale = ws.scalings(x, z)
        except np.linalg.LinAlgError:
            status = "numerical"
            break
        M = ws.schur(scale)
        reg = opts.reg
        for attempt in range(6):
            try:
                Fc = sla.cho_factor(M, lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                reg = max(reg, 1e-14) * 100.0
                M[np.diag_indices_from(M)] += reg * (1.0 + np.abs(np.diag(M)).mean())
        else:
            status = "numerical"
            break
        if ws.nf:
            MinvAf = sla.cho_solve(Fc, ws.Af, check_finite=False)
            S = ws.Af.T @ MinvAf
            Sc = sla.cho_factor(S, lower=True, check_finite=False)

        def k2_once(u, gfree):
            t = sla.cho_solve(Fc, u, check_finite=False)
            if ws.nf == 0:
                return t, np.zeros(0)
            dxf = sla.cho_solve(Sc, ws.Af.T @ t - gfree, check_finite=False)
            return t - MinvAf @ dxf, dxf

        def k2_solve(u, gfree):
            dy, dxf = k2_once(u, gfree)
            for _ in range(opts.refine_steps):
                res1 = u - M @ dy
                if ws.nf:
                    res1 -= ws.Af @ dxf
                    res2 = gfree - ws.Af.T @ dy
                else:
                    res2 = np.zeros(0)
                ey, exf = k2_once(res1, res2)
                dy = dy + ey
                dxf = dxf + exf
            return dy, dxf

        r_p, r_d, r_g = residuals()
        r_d_free = np.concatenate([r_d[bi].ravel() for bi in ws.free]) \
            if ws.nf else np.zeros(0)

        # A_c Phi^{-1} c_c and <c_c, Phi^{-1} c_c>
        phic = ws.phi_inv_blocks(scale, cx_blocks)
        v_c = problem.apply_A(phic)
        q_cc = ws.inner(cx_blocks, phic)
        c_f = ws.free_vec(cx_blocks)

        # shared second RHS: direction of tau
        y2, f2 = k2_solve(b + v_c, c_f)
        e2_const = -float(c_f @ f2) - float(v_c @ y2) + q_cc + float(b @ y2) \
            + kappa / tau

        def newton(eta, sigma_mu, corr, dt_corr):
            """One reduced Newton solve; returns the direction tuple."""
            gblocks = []
            for bi in range(len(ws.blocks)):
                if bi in ws.cone_set:
                    sc = scale[bi]
                    if ws.blocks[bi].is_matrix:
                        lam = sc.lam
                        dtype = complex if ws.blocks[bi].kind == "psd_complex" else float
                        D = -np.diag(lam * lam).astype(dtype)
                        if sigma_mu:
                            D += sigma_mu * np.eye(len(lam))
                        if corr is not None:
                            D -= corr[bi]
                        U = D / ((lam[:, None] + lam[None, :]) / 2.0)
                        val = sc.unscale_to_z(U)
                        if dtype is float:
                            val = val.real
                        gblocks.append(val - eta * r_d[bi])
                    else:
                        lam = sc.lam
                        d = -_soc_prod(lam, lam)
                        if sigma_mu:
                            d[0] += sigma_mu
                        if corr is not None:
                            d -= corr[bi]
                        u = _soc_solve(lam, d)
                        gblocks.append(sc.unscale_to_z(u) - eta * r_d[bi])
                else:
                    gblocks.append(np.zeros_like(r_d[bi]))
            phig = ws.phi_inv_blocks(scale, gblocks)
            rhs1 = -eta * r_p - problem.apply_A(phig)
            y1, f1 = k2_solve(rhs1, eta * r_d_free)
            d_t = dt_corr + (sigma_mu - tau * kappa if sigma_mu else -tau * kappa)
            e1 = -float(c_f @ f1) - ws.inner(cx_blocks, phig) - float(v_c @ y1) \
                + float(b @ y1) - d_t / tau + eta * r_g
            dtau = -e1 / e2_const
            dy = y1 + dtau * y2
            dxf = f1 + dtau * f2 if ws.nf else np.zeros(0)
            At_dy = problem.apply_AT(dy)
            dx = []
            dz = []
            for bi in range(len(ws.blocks)):
                if bi in ws.cone_set:
                    sc = scale[bi]
                    dx.append(sc.phi_inv(At_dy[bi]) + phig[bi] - dtau * phic[bi])
                    dz.append(-At_dy[bi] + cx_blocks[bi] * dtau + eta * r_d[bi])
                else:
                    dx.append(None)
                    dz.append(None)
            if ws.nf:
                fvec = dxf
                for bi in ws.free:
                    off = ws.free_offsets[bi]
                    dx[bi] = fvec[off:off + ws.blocks[bi].n]
            else:
                for bi in ws.free:
                    dx[bi] = np.zeros(ws.blocks[bi].n)
            dkappa = (d_t - kappa * dtau) / tau
            return dx, dy, dz, dtau, dkappa

        def max_step(dx, dz, dtau, dkappa):
            a = np.inf
            for bi in ws.cone:
                if ws.blocks[bi].is_matrix:
                    a = min(a, _psd_step_bound(scale[bi].Lx, dx[bi]))
                    a = min(a, _psd_step_bound(scale[bi].Lz, dz[bi]))
                else:
                    a = min(a, _soc_step_bound(x[bi], dx[bi]))
                    a = min(a, _soc_step_bound(z[bi], dz[bi]))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # --- predictor -----------------------------------------------------
        dxa, dya, dza, dta, dka = newton(1.0, 0.0, None, 0.0)
        alpha_aff = min(1.0, max_step(dxa, dza, dta, dka))
        inner_aff = 0.0
        for bi in ws.cone:
            inner_aff += float(np.vdot(x[bi] + alpha_aff * dxa[bi],
                                       z[bi] + alpha_aff * dza[bi]).real)
        mu_aff = (inner_aff + (tau + alpha_aff * dta) * (kappa + alpha_aff * dka)) \
            / (ws.nu + 1)
        sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0))

        # --- corrector -------------------------------------------------------
        corr = {}
        for bi in ws.cone:
            sc = scale[bi]
            if ws.blocks[bi].is_matrix:
                ux = sc.scale_x(dxa[bi])
                uz = sc.scale_z(dza[bi])
                corr[bi] = (ux @ uz + uz @ ux) / 2.0
            else:
                corr[bi] = _soc_prod(sc.scale_x(dxa[bi]), sc.scale_z(dza[bi]))
        dx, dy, dz, dtau, dkappa = newton(1.0 - sigma, sigma * mu, corr,
                                          -dta * dka)

        alpha = min(1.0, opts.step_fraction * max_step(dx, dz, dtau, dkappa))

        # --- update with positivity safeguard --------------------------------
        committed = False
        for _ in range(10):
            nx = [x[bi] + alpha * dx[bi] if dx[bi] is not None else x[bi]
                  for bi in range(len(ws.blocks))]
            nz = [z[bi] + alpha * dz[bi] if dz[bi] is not None else z[bi]
                  for bi in range(len(ws.blocks))]
            ntau = tau + alpha * dtau
            nkappa = kappa + alpha * dkappa
            ok = ntau > 0 and nkappa > 0
            if ok:
                for bi in ws.cone:
                    if ws.blocks[bi].is_matrix:
                        nx[bi] = (nx[bi] + nx[bi].conj().T) / 2.0
                        nz[bi] = (nz[bi] + nz[bi].conj().T) / 2.0
                        try:
                            np.linalg.cholesky(nx[bi])
                            np.linalg.cholesky(nz[bi])
                        except np.linalg.LinAlgError:
                            ok = False
                            break
                    else:
                        if (_soc_jquad(nx[bi]) <= 0 or nx[bi][0] <= 0
                                or _soc_jquad(nz[bi]) <= 0 or nz[bi][0] <= 0):
                            ok = False
                            break
            if ok:
                x, z, tau, kappa = nx, nz, ntau, nkappa
                y = y + alpha * dy
                committed = True
                break
            alpha *= 0.7
        if not committed:
            status = "numerical"
            break
        stall = stall + 1 if alpha < 1e-4 else 0

        log.append({"iter": it, "gap": (ws.inner(x, z) + tau * kappa) / tau**2,
                    "pres": pres, "dres": dres, "step": alpha, "sigma": sigma,
                    "pobj": pobj, "dobj": dobj, "mu": mu, "tau": tau,
                    "kappa": kappa})
        if opts.verbose:
            print(f"[{it:3d}] gap={relgap:9.2e} pres={pres:9.2e} "
                  f"dres={dres:9.2e} step={alpha:6.3f} sigma={sigma:5.3f}")

    if status in ("optimal",):
        xs, ys, pobj, dobj, pres, dres, gap, relgap = _status_metrics(ws, x, y, z, tau)
        zs = [v / tau if bi in ws.cone_set else v
              for bi, v in enumerate(z)]
        return SolverResult(status=status, x=xs, y=ys, z=zs,
                            primal_objective=pobj, dual_objective=dobj,
                            gap=relgap, primal_residual=pres, dual_residual=dres,
                            iterations=len(log), tau=tau, kappa=kappa, log=log)
    if status in ("primal_infeasible", "dual_infeasible"):
        return SolverResult(status=status, x=x, y=y, z=z,
                            primal_objective=np.nan, dual_objective=np.nan,
                            gap=np.nan, primal_residual=np.nan,
                            dual_residual=np.nan, iterations=len(log),
                            tau=tau, kappa=kappa, log=log)
    # fall back to the best scaled iterate seen; a stall within reduced
    # accuracy is still a usable solution and is labelled as such
    score, bx, by_, bz, btau, bkappa, (pobj, dobj, pres, dres, relgap) = best
    if status in ("stalled", "max_iter", "numerical") and score <= opts.tol_reduced:
        status = "optimal_inaccurate"
    return SolverResult(status=status, x=bx, y=by_, z=bz,
                        primal_objective=pobj, dual_objective=dobj, gap=relgap,
                        primal_residual=pres, dual_residual=dres,
                        iterations=len(log), tau=btau, kappa=bkappa, log=log)
