import math

import numpy as np
import pytest

from pfadvantage.netmodel import (
    build_reduced_system,
    grid_case,
    path_case,
    ring_case,
    tree_with_chords_case,
)
from pfadvantage.sparsela import (
    SparseMatrix,
    cg_iteration_bound,
    cg_solve,
    energy_norm_error,
    injection_sweep,
    matvec,
    read_matrix,
    read_vector,
    write_matrix,
    write_vector,
)
from pfadvantage.spectra import condition_number, extreme_eigs
from pfadvantage.utils import DimensionMismatchError, DomainError, NotPositiveDefiniteError

from .conftest import FOUR_BUS_A, FOUR_BUS_X, random_spd


@pytest.fixture
def four_bus_a():
    return SparseMatrix.from_dense(FOUR_BUS_A)


def test_csr_layout(four_bus_a):
    np.testing.assert_array_equal(four_bus_a.row_starts, [0, 2, 5, 7])
    np.testing.assert_array_equal(four_bus_a.col_indices, [0, 1, 0, 1, 2, 1, 2])
    np.testing.assert_array_equal(four_bus_a.values, [2, -1, -1, 3, -1, -1, 2])
    assert four_bus_a.nnz == 7
    assert four_bus_a.is_symmetric()
    with pytest.raises(ValueError):
        four_bus_a.values[0] = 5.0


@pytest.mark.parametrize(
    "row_starts, cols",
    [
        ([0, 1], [0]),  # wrong length
        ([0, 1, 1], [3]),  # column out of range
        ([0, 2, 2], [1, 0]),  # unsorted row
    ],
)
def test_invalid_csr(row_starts, cols):
    with pytest.raises(DimensionMismatchError):
        SparseMatrix(2, row_starts, cols, np.ones(len(cols)))


def test_from_coo_sums_duplicates():
    a = SparseMatrix.from_coo(2, [0, 0, 1], [1, 1, 0], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(a.to_dense(), [[0, 3], [3, 0]])


@pytest.mark.parametrize(
    "a, v, expected",
    [
        (SparseMatrix.identity(3), [1, 2, 3], [1, 2, 3]),
        (SparseMatrix.from_dense(FOUR_BUS_A), FOUR_BUS_X, [1, 0, -1]),
        (SparseMatrix.from_dense(np.zeros((3, 3))), [1, 2, 3], [0, 0, 0]),
    ],
)
def test_matvec(a, v, expected):
    np.testing.assert_allclose(matvec(a, v), expected)


def test_matvec_dimension_mismatch(four_bus_a):
    with pytest.raises(DimensionMismatchError):
        matvec(four_bus_a, [1.0, 2.0])


def test_cg_identity():
    b = np.array([3.0, -1.0, 4.0])
    res = cg_solve(SparseMatrix.identity(3), b)
    assert res.converged
    assert res.iterations <= 1
    np.testing.assert_allclose(res.x, b)


def test_cg_four_bus(four_bus_a):
    res = cg_solve(four_bus_a, [1.0, 0.0, -1.0])
    assert res.converged
    assert res.iterations <= 3
    assert len(res.residual_history) == res.iterations + 1
    assert res.residual_history[0] == 1.0
    np.testing.assert_allclose(res.x, FOUR_BUS_X, atol=1e-12)


def test_cg_warm_start_exact(four_bus_a):
    res = cg_solve(four_bus_a, [1.0, 0.0, -1.0], x0=FOUR_BUS_X)
    assert res.converged
    assert res.iterations == 0
    assert res.residual_history == (0.0,)


def test_cg_max_iter_zero(four_bus_a):
    res = cg_solve(four_bus_a, [1.0, 0.0, -1.0], max_iter=0)
    assert not res.converged
    assert res.iterations == 0
    np.testing.assert_array_equal(res.x, 0.0)


def test_cg_zero_rhs(four_bus_a):
    res = cg_solve(four_bus_a, np.zeros(3))
    assert res.converged
    assert res.iterations == 0


def test_cg_kappa_bound(four_bus_a):
    res = cg_solve(four_bus_a, [1.0, 0.0, -1.0], rel_tol=1e-4, kappa=4.0)
    assert res.bound_iterations == 10


def test_cg_breakdown():
    a = SparseMatrix.diag([1.0, -1.0])
    with pytest.raises(NotPositiveDefiniteError):
        cg_solve(a, [0.0, 1.0])


@pytest.mark.parametrize("rel_tol", [0.0, 1.0, -1e-3])
def test_cg_bad_tolerance(four_bus_a, rel_tol):
    with pytest.raises(DomainError):
        cg_solve(four_bus_a, [1.0, 0.0, -1.0], rel_tol=rel_tol)


@pytest.mark.parametrize("n", [5, 10, 25, 50])
def test_cg_random_spd_finite_termination(rng, n):
    dense = random_spd(rng, n, cond=10.0)
    b = rng.normal(size=n)
    res = cg_solve(SparseMatrix.from_dense(dense), b, rel_tol=1e-8, max_iter=n)
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(dense, b), rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize(
    "kappa, eps_c, expected",
    [(1, 1.0, 1), (100, 1e-6, 73), (4, 1e-4, 10)],
)
def test_cg_iteration_bound(kappa, eps_c, expected):
    assert cg_iteration_bound(kappa, eps_c) == expected


@pytest.mark.parametrize("kappa, eps_c", [(0.5, 0.1), (10, 0.0), (10, 1.5)])
def test_cg_iteration_bound_domain(kappa, eps_c):
    with pytest.raises(DomainError):
        cg_iteration_bound(kappa, eps_c)


def test_energy_norm_examples():
    assert energy_norm_error(SparseMatrix.identity(3), [0, 0, 0], [3, 4, 0]) == 5.0
    assert energy_norm_error(SparseMatrix.diag([1.0, 4.0]), [0, 0], [1, 1]) == pytest.approx(
        math.sqrt(5)
    )
    a = SparseMatrix.from_dense(FOUR_BUS_A)
    assert energy_norm_error(a, FOUR_BUS_X, FOUR_BUS_X) == 0.0


def test_energy_norm_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        energy_norm_error(SparseMatrix.diag([1.0, -4.0]), [0, 0], [0, 1])


def test_energy_norm_sandwich(rng):
    a = SparseMatrix.from_dense(random_spd(rng, 12, cond=30.0))
    lambda_min, lambda_max = extreme_eigs(a)
    for _ in range(20):
        e = rng.normal(size=12)
        norm_a = energy_norm_error(a, np.zeros(12), e)
        norm_2 = np.linalg.norm(e)
        assert math.sqrt(lambda_min) * norm_2 <= norm_a * (1 + 1e-9)
        assert norm_a <= math.sqrt(lambda_max) * norm_2 * (1 + 1e-9)


BOUND_SYSTEMS = [
    path_case(30, seed=0),
    ring_case(40, seed=1),
    grid_case(6, 7, seed=2),
    tree_with_chords_case(60, 15, seed=3),
]


@pytest.mark.parametrize("eps_c", [1e-4, 1e-6])
@pytest.mark.parametrize("case", BOUND_SYSTEMS, ids=lambda c: c.name)
def test_energy_norm_iteration_bound(case, eps_c):
    reduced = build_reduced_system(case)
    a, b = reduced.a, np.asarray(reduced.b)
    x_star = np.linalg.solve(a.to_dense(), b)
    kappa = condition_number(a)
    e0 = energy_norm_error(a, np.zeros(a.n), x_star)
    errors = []
    cg_solve(
        a,
        b,
        rel_tol=1e-14,
        max_iter=5 * a.n,
        callback=lambda x: errors.append(energy_norm_error(a, x, x_star)),
    )
    reached = next(i + 1 for i, err in enumerate(errors) if err <= eps_c * e0)
    assert reached <= cg_iteration_bound(kappa, eps_c)
    # energy-norm error never increases above round-off
    above = [err for err in errors if err > 1e-10 * e0]
    assert all(later <= earlier * (1 + 1e-9) for earlier, later in zip(above, above[1:]))


def test_callback_receives_copies(four_bus_a):
    seen = []
    res = cg_solve(four_bus_a, [1.0, 0.0, -1.0], callback=seen.append)
    assert len(seen) == res.iterations
    assert seen[-1] is not res.x
    np.testing.assert_allclose(seen[-1], res.x)


def test_warm_sweep_unperturbed_is_free():
    reduced = build_reduced_system(grid_case(6, 6, seed=4))
    sweep = injection_sweep(reduced.a, reduced.b, 5, 0.0, warm=True)
    assert sweep.all_converged
    assert all(it <= 2 for it in sweep.iterations[1:])


def test_warm_sweep_beats_cold():
    reduced = build_reduced_system(grid_case(8, 8, seed=4))
    cold = injection_sweep(reduced.a, reduced.b, 10, 0.01, seed=9, warm=False)
    warm = injection_sweep(reduced.a, reduced.b, 10, 0.01, seed=9, warm=True)
    assert cold.all_converged and warm.all_converged
    assert warm.total_iterations < cold.total_iterations
    assert cold.iterations[0] == warm.iterations[0]
    assert warm.mean_iterations == warm.total_iterations / 10


@pytest.mark.parametrize("n_samples, spread", [(0, 0.1), (3, 1.0), (3, -0.1)])
def test_sweep_domain(four_bus_a, n_samples, spread):
    with pytest.raises(DomainError):
        injection_sweep(four_bus_a, [1.0, 0.0, -1.0], n_samples, spread)


def test_matrix_market_files(tmp_path, four_bus_a):
    path = tmp_path / "four_bus.mtx"
    write_matrix(path, four_bus_a)
    text = path.read_text()
    assert text.startswith("%%MatrixMarket matrix coordinate real general")
    again = read_matrix(path)
    np.testing.assert_array_equal(again.to_dense(), FOUR_BUS_A)


def test_read_hand_written_matrix(tmp_path):
    path = tmp_path / "hand.mtx"
    path.write_text(
        "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 3\n1 1 4.0\n1 2 1.0\n2 2 3.0\n"
    )
    np.testing.assert_array_equal(read_matrix(path).to_dense(), [[4.0, 1.0], [0.0, 3.0]])


def test_vector_files(tmp_path):
    v = [0.1, -2.5e-17, 1.0 / 3.0]
    path = tmp_path / "b.txt"
    write_vector(path, v)
    assert read_vector(path).tolist() == v
    path.write_text("# header\n1.5\n\n% note\n-2\n")
    assert read_vector(path).tolist() == [1.5, -2.0]
