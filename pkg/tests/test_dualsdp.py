"""Dual-program assembly: operators, trace rows, conic container, text format."""

import io

import numpy as np
import pytest

from blindsr import dualsdp as dd
from blindsr import model as md
from blindsr import spectral as sp


def _random_instance(L, K, R, seed, kind="gaussian"):
    sub = md.random_subspace(L, K, kind, seed=seed)
    scene = md.random_scene(R, K, seed=seed + 1, gain_model="unit_modulus",
                            N=(L - 1) // 2, min_sep=0.15)
    obs = md.synthesize(scene, sub)
    return sub, scene, obs


def _random_hermitian(n, rng):
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (G + G.conj().T) / 2.0


# ---------------------------------------------------------------------------
# forward / adjoint sampling operators
# ---------------------------------------------------------------------------

class TestOperators:
    def test_forward_reproduces_synthesized_samples(self):
        sub, scene, obs = _random_instance(9, 2, 2, seed=20)
        U = md.lift(scene, sub.L)
        y = dd.forward_operator(U.U, sub)
        assert np.abs(y - obs.y).max() < 1e-10

    def test_forward_adjoint_inner_product_identity(self):
        # <q, X(U)>_R == <X*(q), U>_R for random dense inputs
        rng = np.random.default_rng(7)
        sub = md.random_subspace(7, 3, "gaussian", seed=8)
        for _ in range(5):
            U = rng.normal(size=(3, 49)) + 1j * rng.normal(size=(3, 49))
            q = rng.normal(size=7) + 1j * rng.normal(size=7)
            lhs = np.vdot(q, dd.forward_operator(U, sub)).real
            rhs = np.vdot(dd.adjoint_operator(q, sub), U).real
            assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_adjoint_is_weighted_sum_of_dtilde_rows(self):
        sub = md.random_subspace(5, 2, "fourier_rows", seed=3)
        q = np.arange(1.0, 6.0) + 1j
        acc = np.zeros((2, 25), dtype=complex)
        for i, p in enumerate(range(-2, 3)):
            acc += q[i] * sp.dtilde(p, sub).conj().T
        assert np.abs(dd.adjoint_operator(q, sub) - acc).max() < 1e-12


# ---------------------------------------------------------------------------
# Qhat coefficient map and the induced polynomial
# ---------------------------------------------------------------------------

class TestQhat:
    def test_entries_match_definition(self):
        """Column (p, k) is q_p exp(i 2 pi k p / L) ghat_k / L."""
        sub = md.random_subspace(5, 2, "gaussian", seed=9)
        L, K, N = 5, 2, 2
        rng = np.random.default_rng(10)
        q = rng.normal(size=L) + 1j * rng.normal(size=L)
        Qhat = dd.build_qhat(q, sub)
        # independent slow oracle
        d = sub.D.conj()  # row l of D is d_l^H, so d_l are the conjugates
        for p in range(-N, N + 1):
            for k in range(-N, N + 1):
                ghat_k = sum(d[l + N] * np.exp(-2j * np.pi * k * l / L)
                             for l in range(-N, N + 1))
                col = q[p + N] * np.exp(2j * np.pi * k * p / L) * ghat_k / L
                j = (p + N) * L + (k + N)
                assert np.abs(Qhat[:, j] - col).max() < 1e-12

    def test_polynomial_agrees_with_adjoint_route(self):
        sub, scene, obs = _random_instance(7, 2, 1, seed=31)
        rng = np.random.default_rng(32)
        q = rng.normal(size=7) + 1j * rng.normal(size=7)
        Qhat = dd.build_qhat(q, sub)
        Xq = dd.adjoint_operator(q, sub)
        N = 3
        ps = np.arange(-N, N + 1)
        for _ in range(10):
            tau, f = rng.uniform(size=2)
            phases = np.exp(-2j * np.pi * (ps[None, :] * tau + ps[:, None] * f))
            via_qhat = (Qhat * phases.ravel()[None, :]).sum(axis=1)
            via_atom = Xq @ np.asarray(sp.atom((tau, f), 7))
            assert np.abs(via_qhat - via_atom).max() < 1e-10


# ---------------------------------------------------------------------------
# trace-row group
# ---------------------------------------------------------------------------

class TestTraceGroup:
    def test_row_counts(self):
        assert dd.theta_trace_rows(15).nrows == 841   # (2L-1)^2
        assert dd.theta_trace_rows(21).nrows == 1681
        assert dd.theta_trace_rows(21).onesided.shape == (841, 2)

    def test_identity_matrix_hits_only_the_zero_offset(self):
        g = dd.theta_trace_rows(15)
        vals = g.apply(np.eye(225, dtype=complex))
        assert vals[0] == pytest.approx(225.0)
        assert np.count_nonzero(vals) == 1

    def test_apply_matches_triplet_expansion(self):
        g = dd.theta_trace_rows(5)
        rng = np.random.default_rng(55)
        X = _random_hermitian(25, rng)
        vals = g.apply(X)
        for row_id, (r, c, v) in enumerate(g.to_triplets(25)):
            ref = np.sum(v * X[r, c]).real
            assert vals[row_id] == pytest.approx(ref, abs=1e-12)

    def test_scatter_is_the_adjoint_of_apply(self):
        g = dd.theta_trace_rows(5)
        rng = np.random.default_rng(56)
        X = _random_hermitian(25, rng)
        w = rng.normal(size=g.nrows)
        B = np.zeros((25, 25), dtype=complex)
        g.scatter(B, w)
        A = (B + B.conj().T) / 2.0
        assert np.vdot(A, X).real == pytest.approx(float(w @ g.apply(X)), abs=1e-10)

    def test_rejects_even_or_nonpositive_grid(self):
        with pytest.raises(ValueError):
            dd.theta_trace_rows(8)
        with pytest.raises(ValueError):
            dd.theta_trace_rows(0)


# ---------------------------------------------------------------------------
# assembled conic problems
# ---------------------------------------------------------------------------

class TestAssemble:
    def test_shapes_with_redundant_gram_block(self):
        sub, scene, obs = _random_instance(15, 3, 1, seed=40)
        p = dd.assemble(obs.y, sub, include_redundant_q=True)
        p.validate()
        assert p.m == 3041
        assert p.cone_dims() == [("free", 30), ("psd", 456), ("psd", 450)]
        assert len(p.meta["trace_targets"]) == 841

    def test_shapes_without_redundant_gram_block(self):
        sub, scene, obs = _random_instance(15, 3, 1, seed=40)
        p = dd.assemble(obs.y, sub, include_redundant_q=False)
        p.validate()
        assert p.m == 2200
        assert p.cone_dims() == [("free", 30), ("psd", 456)]

    def test_noisy_variant_swaps_free_block_for_soc(self):
        sub, scene, obs = _random_instance(15, 3, 1, seed=40)
        p = dd.assemble(obs.y, sub, variant="noisy", zeta=3.0,
                        include_redundant_q=False)
        p.validate()
        assert p.cone_dims() == [("soc", 31), ("psd", 456)]
        assert p.meta["zeta"] == 3.0

    def test_trace_targets_pin_unit_center(self):
        sub, scene, obs = _random_instance(9, 2, 1, seed=41)
        p = dd.assemble(obs.y, sub, include_redundant_q=False)
        rhs = p.rhs_full()
        grp = p.groups[0]
        assert rhs[0] == 1.0          # offset (0, 0) row
        assert np.count_nonzero(rhs[:grp.nrows]) == 1

    def test_objective_is_negated_inner_product_with_samples(self):
        # feeding the q layout back through the objective recovers -<q, y>_R
        sub, scene, obs = _random_instance(9, 2, 1, seed=42)
        p = dd.assemble(obs.y, sub, include_redundant_q=False)
        lay = p.meta["q_layout"]
        rng = np.random.default_rng(43)
        q = rng.normal(size=9) + 1j * rng.normal(size=9)
        xb = p.zero_blocks()
        xb[lay["block"]][lay["re"]:lay["re"] + 9] = q.real
        xb[lay["block"]][lay["im"]:lay["im"] + 9] = q.imag
        assert p.objective_value(xb) == pytest.approx(-np.vdot(obs.y, q).real,
                                                      abs=1e-10)

    def test_apply_A_and_apply_AT_are_adjoint(self):
        sub, scene, obs = _random_instance(9, 2, 1, seed=44)
        for variant in ("exact", "noisy"):
            p = dd.assemble(obs.y, sub, variant=variant,
                            include_redundant_q=(variant == "exact"))
            rng = np.random.default_rng(45)
            xb = []
            for bi, blk in enumerate(p.blocks):
                if blk.is_matrix:
                    xb.append(_random_hermitian(blk.n, rng))
                else:
                    xb.append(rng.normal(size=blk.n))
            yv = rng.normal(size=p.m)
            lhs = float(yv @ p.apply_A(xb))
            At = p.apply_AT(yv)
            rhs = sum(np.vdot(At[bi], xb[bi]).real for bi in range(len(p.blocks)))
            assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_rejects_unknown_variant(self):
        sub, scene, obs = _random_instance(9, 2, 1, seed=46)
        with pytest.raises(ValueError):
            dd.assemble(obs.y, sub, variant="huber")

    def test_validate_catches_structural_damage(self):
        sub, scene, obs = _random_instance(9, 2, 1, seed=47)
        p = dd.assemble(obs.y, sub, include_redundant_q=False)
        p.blocks[1] = dd.BlockSpec("psd_complex", 4)  # grid no longer fits
        with pytest.raises(ValueError):
            p.validate()


# ---------------------------------------------------------------------------
# real symmetric embedding
# ---------------------------------------------------------------------------

class TestEmbedding:
    def test_round_trip(self):
        rng = np.random.default_rng(50)
        A = _random_hermitian(5, rng)
        back = dd.unembed_hermitian(dd.embed_hermitian(A))
        assert np.abs(back - A).max() < 1e-14

    def test_eigenvalues_double_up(self):
        rng = np.random.default_rng(51)
        A = _random_hermitian(5, rng)
        w = np.linalg.eigvalsh(A)
        we = np.linalg.eigvalsh(dd.embed_hermitian(A))
        assert np.abs(np.sort(np.repeat(w, 2)) - np.sort(we)).max() < 1e-12

    def test_embedding_is_symmetric_and_psd_preserving(self):
        rng = np.random.default_rng(52)
        G = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        A = G @ G.conj().T
        E = dd.embed_hermitian(A)
        assert np.abs(E - E.T).max() < 1e-14
        assert np.linalg.eigvalsh(E).min() > -1e-12


# ---------------------------------------------------------------------------
# triplet text round trip
# ---------------------------------------------------------------------------

class TestExportImport:
    def test_functionals_survive_the_embedding(self):
        sub, scene, obs = _random_instance(5, 2, 1, seed=60)
        p = dd.assemble(obs.y, sub, include_redundant_q=False)
        text = dd.export_conic(p)
        q = dd.import_conic(io.StringIO(text))
        q.validate()
        assert q.m == p.m
        assert q.cone_dims() == p.cone_dims()
        assert np.abs(q.rhs_full() - p.rhs_full()).max() == 0.0

        # evaluate all functionals on matched iterates: complex block X on the
        # original, its embedding on the import (entries carry the 1/2 factor)
        rng = np.random.default_rng(61)
        xb = []
        xq = []
        for bi, blk in enumerate(p.blocks):
            if blk.is_matrix:
                X = _random_hermitian(blk.n, rng)
                xb.append(X)
                xq.append(dd.embed_hermitian(X))
            else:
                v = rng.normal(size=blk.n)
                xb.append(v)
                xq.append(v)
        ap = p.apply_A(xb)
        aq = q.apply_A(xq)
        scale = max(1.0, np.abs(ap).max())
        assert np.abs(ap - aq).max() < 1e-12 * scale
        assert abs(p.objective_value(xb) - q.objective_value(xq)) < 1e-12

    def test_byte_exact_round_trip(self):
        sub, scene, obs = _random_instance(5, 2, 1, seed=62)
        p = dd.assemble(obs.y, sub, variant="noisy", include_redundant_q=False)
        text = dd.export_conic(p)
        again = dd.export_conic(dd.import_conic(io.StringIO(text)))
        assert again == text

    def test_import_rejects_malformed_header(self):
        with pytest.raises(ValueError):
            dd.import_conic(io.StringIO("p wrong-format/9\n"))


def test_assembled_rows_are_linearly_independent():
    sub = md.random_subspace(5, 1, "gaussian", seed=70)
    scene = md.random_scene(1, 1, seed=71, gain_model="unit_modulus", N=2)
    obs = md.synthesize(scene, sub)
    p = dd.assemble(obs.y, sub, include_redundant_q=False)
    q = dd.import_conic(io.StringIO(dd.export_conic(p)))
    # densify every row of the imported (all-real) problem
    widths = [b.n * b.n if b.is_matrix else b.n for b in q.blocks]
    offs = np.concatenate([[0], np.cumsum(widths)])
    A = np.zeros((q.m, offs[-1]))
    for bi, coo in q.gen_mat.items():
        A[coo.row, offs[bi] + coo.r * q.blocks[bi].n + coo.c] += coo.v.real
    for bi, coo in q.gen_vec.items():
        A[coo.row, offs[bi] + coo.idx] += coo.v
    assert np.linalg.matrix_rank(A) == q.m
