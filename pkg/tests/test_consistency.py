"""Cross-module consistency: the matrix manifold and the 2-mode TT
manifold must produce the same geometry, results must be reproducible
under concurrency, and operators may change mode sizes."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ttriem.matrix import (
    FixedRankPoint,
    hess_vec_matrix,
    project_matrix,
    riemannian_grad_matrix,
    tangent_materialize,
)
from ttriem.objectives import quadratic_form
from ttriem.oracles import dense_project
from ttriem.tt import (
    TtTensor,
    orthogonalize,
    random_symmetric_ttmat,
    random_tt,
    random_ttmat,
    tt_to_dense,
    ttmat_to_dense,
)
from ttriem.ttmanifold import (
    hess_vec_tt,
    preconditioned_residual,
    project_tt,
    riemannian_grad_tt,
)


def tt_from_dense_exact(a):
    """Full-rank TT of a small dense tensor (sequential QR sweep)."""
    shape = a.shape
    cores = []
    work = a.reshape(1, -1)
    rl = 1
    for k in range(len(shape) - 1):
        m = work.reshape(rl * shape[k], -1)
        q, r = np.linalg.qr(m, mode="reduced")
        cores.append(q.reshape(rl, shape[k], q.shape[1]))
        work = r
        rl = q.shape[1]
    cores.append(work.reshape(rl, shape[-1], 1))
    return TtTensor(cores)


def matrix_point_as_tt(x: FixedRankPoint) -> TtTensor:
    us = x.u @ x.s
    first = us[None, :, :].transpose(0, 1, 2)  # (1, m, r)
    second = x.v.T[:, :, None]  # (r, n, 1)
    return TtTensor([first, second])


class TestMatrixVsTwoModeTt:
    def setup_method(self):
        rng = np.random.default_rng(99)
        u = np.linalg.qr(rng.standard_normal((4, 2)))[0]
        v = np.linalg.qr(rng.standard_normal((5, 2)))[0]
        self.x = FixedRankPoint(u, np.diag([2.0, 0.7]), v)
        # symmetric operator on 4 x 5 matrices, as a 2-mode TT operator
        self.op = random_symmetric_ttmat(rng, (4, 5), 2)
        self.obj = quadratic_form(self.op)
        self.z_dense = rng.standard_normal((4, 5))

    def test_gradients_coincide(self):
        g_mat = riemannian_grad_matrix(self.obj.factor_program(), self.x)
        left, right = tangent_materialize(g_mat)
        base = orthogonalize(matrix_point_as_tt(self.x))
        g_tt = riemannian_grad_tt(self.obj.evaluate, base)
        np.testing.assert_allclose(
            left @ right.T, tt_to_dense(g_tt.materialize()), atol=1e-10
        )

    def test_projections_coincide(self):
        t_mat = project_matrix(self.x, self.z_dense)
        left, right = tangent_materialize(t_mat)
        base = orthogonalize(matrix_point_as_tt(self.x))
        t_tt = project_tt(base, tt_from_dense_exact(self.z_dense))
        np.testing.assert_allclose(
            left @ right.T, tt_to_dense(t_tt.materialize()), atol=1e-11
        )

    def test_hessian_vector_products_coincide(self):
        z_mat = project_matrix(self.x, self.z_dense)
        h_mat = hess_vec_matrix(self.obj.factor_program(), self.x, z_mat)
        hl, hr = tangent_materialize(h_mat)
        base = orthogonalize(matrix_point_as_tt(self.x))
        z_tt = project_tt(base, tt_from_dense_exact(self.z_dense))
        h_tt = hess_vec_tt(self.obj.evaluate, base, z_tt)
        np.testing.assert_allclose(
            hl @ hr.T, tt_to_dense(h_tt.materialize()), atol=1e-10
        )


class TestConcurrency:
    def test_parallel_gradients_match_serial(self):
        instances = []
        for seed in range(8):
            rng = np.random.default_rng(400 + seed)
            base = orthogonalize(random_tt(rng, (2, 3, 2), 2))
            obj = quadratic_form(random_symmetric_ttmat(rng, (2, 3, 2), 2))
            instances.append((obj, base))
        serial = [riemannian_grad_tt(obj.evaluate, base) for obj, base in instances]
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = list(
                pool.map(lambda p: riemannian_grad_tt(p[0].evaluate, p[1]), instances)
            )
        for s, p in zip(serial, parallel):
            for ds, dp in zip(s.deltas, p.deltas):
                np.testing.assert_allclose(ds, dp, atol=1e-13)


class TestRectangularOperators:
    def test_preconditioned_residual_with_shape_changing_operators(self, rng):
        modes_x = (2, 3)
        modes_mid = (3, 2)
        x = random_tt(rng, modes_x, 2)
        base = orthogonalize(x)
        a = random_ttmat(rng, modes_mid, modes_x, 2)  # maps x-space to mid-space
        b = random_ttmat(rng, modes_x, modes_mid, 2)  # maps back
        f = random_tt(rng, modes_mid, 2)
        t = preconditioned_residual(a, b, f, base)
        ad_, bd = ttmat_to_dense(a), ttmat_to_dense(b)
        xd = tt_to_dense(x)
        resid = (bd @ (ad_ @ xd.ravel() - tt_to_dense(f).ravel())).reshape(xd.shape)
        want = dense_project(base, resid)
        np.testing.assert_allclose(
            tt_to_dense(t.materialize()), want, atol=1e-10 * max(np.abs(want).max(), 1.0)
        )
