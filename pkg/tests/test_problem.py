import json

import numpy as np
import pytest

from mnlqr import (LqrmProblem, make_diffusion_network,
                   make_gradient_estimation_example, make_random,
                   make_suspension, ops, validate)
from mnlqr.problem import (ProblemFormatError, load_problem, problem_from_dict,
                           problem_to_dict, save_problem)


def identity_problem():
    return LqrmProblem(np.eye(2), np.eye(2), (), (), np.eye(2), np.eye(2),
                       np.eye(2))


def test_validate_identity_problem_passes():
    assert validate(identity_problem()) == []


def test_validate_flags_zero_R():
    p = LqrmProblem(np.eye(2), np.eye(2), (), (), np.eye(2),
                    np.zeros((2, 2)), np.eye(2))
    assert "R not positive definite" in validate(p)


def test_validate_flags_negative_alpha():
    p = LqrmProblem(np.eye(2), np.eye(2), ((-0.1, np.eye(2)),), (),
                    np.eye(2), np.eye(2), np.eye(2))
    assert "negative noise variance alpha_1" in validate(p)


def test_validate_flags_negative_beta_and_asymmetry():
    p = LqrmProblem(np.eye(2), np.eye(2), (), ((-0.5, np.eye(2)),),
                    np.array([[1.0, 0.3], [0.0, 1.0]]), np.eye(2), np.eye(2))
    msgs = validate(p)
    assert "negative noise variance beta_1" in msgs
    assert "Q not symmetric" in msgs


def test_validate_flags_dimension_mismatch():
    p = LqrmProblem(np.eye(2), np.eye(2), ((0.1, np.eye(3)),), (),
                    np.eye(2), np.eye(2), np.eye(2))
    assert any("A_1" in m for m in validate(p))


def test_suspension_matches_published_values(suspension):
    p = suspension
    assert p.A[1][0] == -2.955
    assert p.A[0][0] == 0.261
    assert p.B[3][0] == 2.165
    assert p.state_noise[2].alpha == 0.017
    assert p.input_noise[0].beta == 0.035
    # A_i is all ones in column i
    for i, term in enumerate(p.state_noise):
        expect = np.zeros((4, 4))
        expect[:, i] = 1.0
        assert np.array_equal(term.Ai, expect)
    assert np.array_equal(p.input_noise[0].Bj, np.ones((4, 1)))
    assert validate(p) == []


def test_diffusion_network_matches_published_values(diffusion):
    p = diffusion
    assert p.A[2][3] == 0.150
    assert p.A[0][0] == 0.795
    assert np.array_equal(p.B, np.eye(4))
    assert tuple(p.alphas) == (0.005, 0.015, 0.010, 0.015, 0.005, 0.020)
    assert tuple(p.betas) == (0.050, 0.150, 0.050, 0.100)
    # edge 1-2 direction: +1 at (0,0),(1,1); -1 at (0,1),(1,0)
    A1 = p.state_noise[0].Ai
    assert A1[0, 0] == 1.0 and A1[1, 1] == 1.0
    assert A1[0, 1] == -1.0 and A1[1, 0] == -1.0
    assert np.count_nonzero(A1) == 4
    # input directions are single-entry diagonal indicators
    for j, term in enumerate(p.input_noise):
        expect = np.zeros((4, 4))
        expect[j, j] = 1.0
        assert np.array_equal(term.Bj, expect)
    assert validate(p) == []


def test_gradient_estimation_example_matches_published_values():
    p = make_gradient_estimation_example()
    assert p.state_noise[0].alpha == 0.1
    assert p.A[0][1] == 0.1
    assert p.q == 0
    assert np.array_equal(p.state_noise[0].Ai, np.array([[0., 1.], [1., 0.]]))
    assert validate(p) == []


def test_generators_are_pure():
    a, b = make_suspension(), make_suspension()
    assert np.array_equal(a.A, b.A)
    assert np.array_equal(a.Astack, b.Astack)
    c, d = make_diffusion_network(), make_diffusion_network()
    assert np.array_equal(c.Bstack, d.Bstack)


def test_make_random_deterministic_in_seed():
    a = make_random(3, 2, 2, 1, seed=42, spectral_target=0.8)
    b = make_random(3, 2, 2, 1, seed=42, spectral_target=0.8)
    assert np.array_equal(a.A, b.A)
    assert np.array_equal(a.B, b.B)
    assert np.array_equal(a.Astack, b.Astack)
    assert np.array_equal(a.alphas, b.alphas)


def test_make_random_hits_spectral_target():
    for seed, target in ((0, 0.9), (5, 0.5)):
        p = make_random(3, 2, 2, 1, seed=seed, spectral_target=target)
        K0 = np.zeros((2, 3))
        rho = ops.spectral_radius(ops.closed_loop_operator(p, K0))
        assert abs(rho - target) <= 1e-9
        assert validate(p) == []


def test_make_random_unstable_target():
    p = make_random(3, 2, 2, 1, seed=3, spectral_target=1.2)
    rho = ops.spectral_radius(ops.closed_loop_operator(p, np.zeros((2, 3))))
    assert rho > 1.0


def test_make_random_preserves_variance_ratios_exactly():
    lo = make_random(3, 2, 3, 1, seed=11, spectral_target=0.4)
    hi = make_random(3, 2, 3, 1, seed=11, spectral_target=1.1)
    # directions are rescaled, variances are untouched
    assert np.array_equal(lo.alphas, hi.alphas)


def test_problem_json_roundtrip(tmp_path, diffusion):
    path = tmp_path / "prob.json"
    save_problem(diffusion, path)
    loaded = load_problem(path)
    assert np.array_equal(loaded.A, diffusion.A)
    assert np.array_equal(loaded.Astack, diffusion.Astack)
    assert loaded.alphas.tolist() == diffusion.alphas.tolist()
    # schema keys are pinned for cross-implementation compatibility
    data = json.loads(path.read_text())
    assert set(data) == {"A", "B", "state_noise", "input_noise", "Q", "R",
                         "Sigma0"}
    assert set(data["state_noise"][0]) == {"alpha", "Ai"}
    assert set(data["input_noise"][0]) == {"beta", "Bj"}


def test_malformed_json_reports_line_and_column(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"A": [[1, 2],\n  [3, ]]}')
    with pytest.raises(ProblemFormatError) as exc:
        load_problem(path)
    assert "line" in str(exc.value) and "column" in str(exc.value)


def test_problem_from_dict_missing_key():
    with pytest.raises(ProblemFormatError):
        problem_from_dict({"A": [[1.0]]})


def test_roundtrip_through_dict(suspension):
    again = problem_from_dict(problem_to_dict(suspension))
    assert np.array_equal(again.B, suspension.B)
    assert again.input_noise[0].beta == suspension.input_noise[0].beta


def test_problem_arrays_immutable(diffusion):
    with pytest.raises(ValueError):
        diffusion.A[0, 0] = 5.0
