#!/usr/bin/env python3
"""
格林函数测试
Matsubara / 虚时间 / 实时间格林函数、共振模式与 Matsubara 分量分析
"""

import json
import sys
import warnings
from pathlib import Path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

import numpy as np
import pytest
from numpy.testing import assert_allclose

from config import get_preset
from errors import (ConvergenceWarning, DistributionPoleError, ParameterError,
                    SingularInverseError)
from greens import (MatsubaraGrid, TensorDomain, _compare_paths, chemical_potential,
                    distribution, distribution_on_spectrum, distribution_plane, dominant_modes,
                    expected_truncation_error, find_resonances, greens_imag_time,
                    greens_imag_time_obc, greens_matsubara, greens_matsubara_map,
                    greens_matsubara_spectral, greens_real_time, growth_rates,
                    imag_time_matsubara_sum, imag_time_spectral, matsubara_frequency,
                    mode_spectrum, resonant_modes)
from model import ModelParams, Statistics, bloch_matrices, k_grid, spectrum
from spectral import bloch_projectors
from utils import load_from_json, read_csv_metadata


def resonant_params(statistics="fermion", **changes):
    return ModelParams(t1=1, t2=2, gamma=3, beta=2 * np.pi, statistics=statistics, **changes)


def beta4pi_params(gamma, statistics):
    return ModelParams(t1=1, t2=2, gamma=gamma, beta=4 * np.pi, statistics=statistics)


def odd_range(limit):
    return {n for n in range(-limit, limit + 1) if n % 2}


def even_range(limit):
    return {n for n in range(-limit, limit + 1) if n % 2 == 0}


# ---------------------------------------------------------------------------
# Matsubara 频率与化学势
# ---------------------------------------------------------------------------

def test_matsubara_frequency_examples():
    assert matsubara_frequency(2 * np.pi, Statistics.BOSON, 0) == pytest.approx(0.0)
    assert matsubara_frequency(np.pi, Statistics.FERMION, 0) == pytest.approx(1.0)
    assert matsubara_frequency(2.0, "fermion", -1) == pytest.approx(-np.pi / 2)
    assert_allclose(matsubara_frequency(np.pi, "boson", np.arange(3)), [0, 2, 4])


def test_matsubara_frequency_rejects_bad_beta():
    with pytest.raises(ParameterError):
        matsubara_frequency(0.0, Statistics.BOSON, 1)


def test_matsubara_grid():
    grid = MatsubaraGrid.symmetric(np.pi, Statistics.FERMION, 2)
    assert_allclose(grid.n_values, [-2, -1, 0, 1, 2])
    assert_allclose(grid.modes, [-3, -1, 1, 3, 5])
    assert_allclose(grid.frequencies, [-3, -1, 1, 3, 5])
    assert MatsubaraGrid.symmetric(np.pi, "boson", 1).parity == 0
    with pytest.raises(ParameterError):
        MatsubaraGrid(np.pi, "boson", 3, 1)


def test_chemical_potential_rules():
    fermion = ModelParams(t1=1, t2=2, gamma=0)
    assert chemical_potential(fermion, spectrum(fermion)) == pytest.approx(-1e-5)

    boson = fermion.with_changes(statistics="boson")
    assert chemical_potential(boson, spectrum(boson)) == pytest.approx(-3 - 1e-5)

    imaginary = boson.with_changes(gamma=3.0)
    assert chemical_potential(imaginary, spectrum(imaginary)) == pytest.approx(-1e-5, abs=1e-12)

    with pytest.raises(ParameterError):
        chemical_potential(boson, [])


# ---------------------------------------------------------------------------
# 分布函数
# ---------------------------------------------------------------------------

def test_distribution_values():
    assert distribution(0.0, 1.0, Statistics.FERMION) == pytest.approx(0.5)
    assert distribution(1.0, np.log(2), Statistics.BOSON) == pytest.approx(1.0)
    assert abs(distribution(1000.0, 1.0, "fermion")) < 1e-300
    assert distribution(-1000.0, 1.0, "fermion") == pytest.approx(1.0)
    assert np.isfinite(distribution(np.array([700.0 + 1j, -700.0]), 2.0, "boson")).all()


def test_distribution_pole():
    with pytest.raises(DistributionPoleError):
        distribution(0.0, 1.0, Statistics.BOSON)
    with pytest.raises(DistributionPoleError):
        distribution(1j * np.pi, 1.0, Statistics.FERMION)


def test_bose_distribution_diverges_near_first_matsubara_frequency():
    beta = 4.0
    ys = np.linspace(0.5, 3.0, 2501)
    values = np.abs(distribution(1j * ys + 1e-3, beta, Statistics.BOSON))
    assert ys[np.argmax(values)] == pytest.approx(np.pi / 2, abs=2e-3)


def test_distribution_plane_peaks_next_to_poles():
    for statistics, parity in (("boson", 0), ("fermion", 1)):
        re, im, magnitude = distribution_plane(4.0, statistics)
        assert magnitude.shape == (400, 200)
        assert not np.any(re == 0)
        row, column = np.unravel_index(np.argmax(magnitude), magnitude.shape)
        poles = np.pi / 4 * (2 * np.arange(-3, 4) + parity)
        assert np.abs(im[row, column] - poles).min() < im[1, 0] - im[0, 0]
    with pytest.raises(ParameterError):
        distribution_plane(4.0, "boson", n_re=1)


def test_distribution_on_spectrum_peaks_at_first_bose_pole():
    table = distribution_on_spectrum(get_preset("fig5").params)
    assert table.shape == (2 * 200, 5)
    assert set(table[:, 1]) == {-1.0, 1.0}
    peak = table[np.argmax(table[:, 4])]
    assert abs(peak[2]) < 1e-12
    assert abs(peak[3]) == pytest.approx(np.pi / 2, abs=0.05)


# ---------------------------------------------------------------------------
# Matsubara 格林函数
# ---------------------------------------------------------------------------

def test_greens_matsubara_example():
    params = ModelParams(t1=1, t2=2, gamma=0, n_cells=8)
    tensor = greens_matsubara(params, 0)
    assert tensor.domain is TensorDomain.MOMENTUM_MATSUBARA
    assert tensor.shape == (2, 2, 8, 1)
    z = -0.5j + 1e-5
    expected = np.linalg.inv(np.array([[z, -3], [-3, z]]))
    assert_allclose(tensor.values[:, :, 0, 0], expected, rtol=1e-12)


@pytest.mark.parametrize("gamma,statistics", [
    (0.5, "fermion"), (2.0, "boson"), (3.0, "fermion"), (3.5, "boson"),
])
def test_greens_matsubara_is_inverse(gamma, statistics):
    params = ModelParams(t1=1, t2=2, gamma=gamma, n_cells=12, statistics=statistics)
    n_values = np.arange(-5, 6)
    tensor = greens_matsubara_map(params, n_values)
    h = bloch_matrices(params, k_grid(12))
    omegas = matsubara_frequency(params.beta, params.statistics, n_values)
    for x in range(12):
        for s, omega in enumerate(omegas):
            z = -1j * omega - tensor.mu
            product = tensor.values[:, :, x, s] @ (z * np.eye(2) + h[x])
            assert_allclose(product, np.eye(2), atol=1e-9)


@pytest.mark.parametrize("gamma", [0.5, 2.0, 3.0, 3.5])
def test_spectral_form_matches_direct_inverse(gamma):
    params = ModelParams(t1=1, t2=2, gamma=gamma, n_cells=24)
    for n in (-3, 0, 2):
        direct = greens_matsubara(params, n).values
        spectral = greens_matsubara_spectral(params, n)
        valid = ~np.isnan(spectral.values[0, 0, :, 0])
        if gamma == 3.0:
            assert spectral.skipped_k == (0.0,)
            assert not valid[0]
        assert_allclose(spectral.values[:, :, valid], direct[:, :, valid], rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("gamma,statistics", [(0.5, "boson"), (3.5, "fermion")])
def test_spectral_resolvent_matches_inverse_off_grid(gamma, statistics):
    params = ModelParams(t1=1, t2=2, gamma=gamma, statistics=statistics)
    rng = np.random.default_rng(2024)
    ks = rng.uniform(0, 2 * np.pi, 10_000)
    omegas = matsubara_frequency(params.beta, params.statistics, rng.integers(-200, 201, ks.size))
    z = -1j * omegas - chemical_potential(params, spectrum(params))

    eigenvalues, projectors, valid = bloch_projectors(params, ks)
    assert valid.all()
    spectral = np.einsum("kmab,km->kab", projectors, 1 / (z[:, None] + eigenvalues))
    direct = np.linalg.inv(z[:, None, None] * np.eye(2) + bloch_matrices(params, ks))
    assert_allclose(spectral, direct, rtol=1e-8, atol=1e-8)


def test_resonant_frequency_dominates():
    params = resonant_params("fermion")
    tensor = greens_matsubara_map(params, [0, 5])
    peak = np.abs(tensor.values[0, 0, :, 0]).max()
    background = np.abs(tensor.values[0, 0, :, 1]).max()
    assert peak > 10 * background


def test_singular_inverse_detected():
    params = ModelParams(t1=1, t2=2, gamma=0, n_cells=8, statistics="boson", mu_offset=1e-15)
    with pytest.raises(SingularInverseError):
        greens_matsubara(params, 0)


def test_matsubara_requires_pbc():
    with pytest.raises(ParameterError):
        greens_matsubara(ModelParams(n_cells=4, boundary="obc"), 0)


# ---------------------------------------------------------------------------
# 共振模式
# ---------------------------------------------------------------------------

def test_resonances_gamma3_beta2pi():
    assert set(find_resonances(resonant_params("boson")).n_modes) == {0, 2, -2, 4, -4}
    assert set(find_resonances(resonant_params("fermion")).n_modes) == odd_range(5)


@pytest.mark.parametrize("gamma,statistics,expected", [
    (1.0, "boson", {0}),
    (2.0, "boson", {0}),
    (3.0, "boson", even_range(10)),
    (4.0, "boson", {12, -12, 14, -14}),
    (1.0, "fermion", set()),
    (2.0, "fermion", odd_range(5)),
    (3.0, "fermion", odd_range(11)),
    (4.0, "fermion", {11, -11, 13, -13, 15, -15}),
])
def test_resonances_beta4pi(gamma, statistics, expected):
    assert set(find_resonances(beta4pi_params(gamma, statistics)).n_modes) == expected


def test_real_line_gap_boson_resonates_only_at_zero():
    params = ModelParams(t1=1, t2=2, gamma=0.5, statistics="boson")
    assert find_resonances(params).n_modes == (0,)


@pytest.mark.parametrize("statistics", ["fermion", "boson"])
def test_resonant_set_grows_with_beta(statistics):
    counts = []
    for beta in (2 * np.pi, 4 * np.pi, 8 * np.pi):
        params = ModelParams(t1=1, t2=2, gamma=3, beta=beta, statistics=statistics)
        counts.append(len({abs(n) for n in find_resonances(params).n_modes}))
    assert counts[0] < counts[1] < counts[2]


def test_resonance_report_contents():
    report = find_resonances(resonant_params("fermion"))
    assert report.tol_re == pytest.approx(1 / 200)
    assert report.mu_used == pytest.approx(-1e-5)
    for entry in report.modes:
        assert abs(entry.energy.imag - entry.n_mode / 2) <= report.tol_im
        assert abs(entry.energy.real - report.mu_used) < report.tol_re
    payload = report.to_dict()
    assert payload["n_modes"] == list(report.n_modes)
    json.dumps(payload)


# ---------------------------------------------------------------------------
# 虚时间：两条路径
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("params", [
    ModelParams(t1=1, t2=2, gamma=2.0, n_cells=16),
    ModelParams(t1=1, t2=2, gamma=0.5, n_cells=16, statistics="boson"),
    ModelParams(t1=1, t2=2, gamma=3.5, n_cells=16, beta=3.0),
])
def test_matsubara_sum_matches_spectral(params):
    summed = imag_time_matsubara_sum(params, n_max=10_000, n_tau=64)
    closed = imag_time_spectral(params, n_tau=64)
    tau = summed.s_axis
    middle = (tau >= params.beta / 4) & (tau <= 3 * params.beta / 4)
    assert_allclose(summed.values[..., middle], closed.values[..., middle], atol=1e-4)


def test_kms_boundary_relation():
    for statistics in ("fermion", "boson"):
        params = ModelParams(t1=1, t2=2, gamma=2.0, n_cells=10, statistics=statistics)
        zeta = params.statistics.zeta
        tensor = imag_time_spectral(params, tau=[0.0, params.beta])
        jump = tensor.values[..., 0] - zeta * tensor.values[..., 1]
        assert_allclose(jump[:, :, 0], np.eye(2), atol=1e-10)
        assert_allclose(jump[:, :, 1:], 0, atol=1e-10)


def test_matsubara_sum_at_zero_is_average():
    params = ModelParams(t1=1, t2=2, gamma=2.0, n_cells=10)
    summed = imag_time_matsubara_sum(params, n_max=10_000, n_tau=32)
    closed = imag_time_spectral(params, n_tau=32)
    assert_allclose(summed.values[:, :, 0, 0], closed.values[:, :, 0, 0] - 0.5 * np.eye(2), atol=1e-3)


def test_tau_override_rejects_out_of_range():
    with pytest.raises(ParameterError):
        imag_time_spectral(ModelParams(n_cells=4), tau=[-0.1])


def test_greens_imag_time_converges():
    params = resonant_params("fermion", n_cells=40)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        tensor = greens_imag_time(params, n_max=10_000, n_tau=128)
    assert tensor.shape == (2, 2, 40, 128)
    assert tensor.skipped_k == (0.0,)
    assert tensor.diagnostics["max_error_ratio"] < 10
    assert tensor.diagnostics["path"] == "matsubara_sum"


def test_convergence_warning_on_large_discrepancy():
    beta = 2 * np.pi
    tau = beta * np.arange(16) / 16
    closed = np.zeros((2, 16), dtype=complex)
    with pytest.warns(ConvergenceWarning):
        report = _compare_paths(closed + 1.0, closed, beta, 10_000, tau, "test")
    assert report["max_abs_difference"] == pytest.approx(1.0)


def test_expected_truncation_error():
    beta = 2.0
    assert expected_truncation_error(beta, 100, np.array([1.0]))[0] == pytest.approx(1 / (100 * np.pi))


def test_hermitian_imag_time_is_real():
    params = ModelParams(t1=1, t2=2, gamma=0, n_cells=12, boundary="obc")
    tensor = imag_time_spectral(params, n_tau=32)
    assert np.abs(tensor.values.imag).max() < 1e-10


def test_grid_arguments_validated():
    with pytest.raises(ParameterError):
        greens_imag_time(ModelParams(n_cells=4), n_max=0)
    with pytest.raises(ParameterError):
        greens_imag_time(ModelParams(n_cells=4), n_tau=1)


# ---------------------------------------------------------------------------
# Matsubara 分量谱
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("gamma,statistics", [
    (gamma, statistics) for gamma in (1.0, 2.0, 3.0, 4.0) for statistics in ("boson", "fermion")
])
def test_resonant_modes_match_resonance_search(gamma, statistics):
    params = beta4pi_params(gamma, statistics)
    tensor = greens_imag_time(params, n_max=4_000, n_tau=512)
    assert resonant_modes(tensor) == find_resonances(params).n_modes


@pytest.mark.parametrize("statistics,expected", [("fermion", ()), ("boson", (0,))])
def test_hermitian_chain_has_no_finite_frequency_resonance(statistics, expected):
    params = ModelParams(t1=1, t2=2, gamma=0, beta=4 * np.pi, n_cells=100, statistics=statistics)
    tensor = greens_imag_time(params, n_max=4_000, n_tau=256)
    assert resonant_modes(tensor) == expected
    assert set(dominant_modes(tensor, 0, 0)) <= set(expected)
    assert set(dominant_modes(tensor, 1, 1)) <= set(expected)


def test_mixed_phase_boson_zero_mode_dominates():
    params = beta4pi_params(2.0, "boson").with_changes(n_cells=50)
    tensor = greens_imag_time(params, n_tau=256)
    n_modes, magnitudes = mode_spectrum(tensor, 0, 0)
    zero = magnitudes[n_modes == 0][0]
    assert zero > 100 * magnitudes[n_modes != 0].max()


@pytest.mark.parametrize("gamma", [2.0, 3.0, 3.5])
def test_sublattice_asymmetry_of_resonant_peaks(gamma):
    params = ModelParams(t1=1, t2=2, gamma=gamma, beta=2 * np.pi)
    n_values = np.arange(-8, 8)
    modes = 2 * n_values + 1
    tensor = greens_matsubara_map(params, n_values)

    # 损耗子晶格与负模式共振，增益子晶格与正模式共振
    assert modes[np.argmax(np.abs(tensor.values[0, 0]).max(axis=0))] < 0
    assert modes[np.argmax(np.abs(tensor.values[1, 1]).max(axis=0))] > 0
    off_diagonal = np.abs(tensor.values[0, 1])
    assert_allclose(off_diagonal, off_diagonal[:, ::-1], rtol=1e-6)


def test_mode_analysis_requires_imag_time():
    tensor = greens_matsubara(ModelParams(n_cells=4), 0)
    with pytest.raises(ParameterError):
        mode_spectrum(tensor, 0, 0)
    with pytest.raises(ParameterError):
        resonant_modes(tensor)
    obc = greens_imag_time_obc(ModelParams(n_cells=4, boundary="obc", gamma=0.5), n_max=200, n_tau=16)
    with pytest.raises(ParameterError):
        resonant_modes(obc)


# ---------------------------------------------------------------------------
# 开链
# ---------------------------------------------------------------------------

def test_topological_edges_resonate_with_opposite_modes():
    params = get_preset("fig4-topo").params
    tensor = greens_imag_time_obc(params, n_tau=256)
    assert tensor.shape == (2, 2, 40, 256)
    assert len(tensor.diagnostics["edge_state_indices"]) == 2
    right_edge = params.n_cells - 1

    n_modes, left = mode_spectrum(tensor, 0, 0, site=0)
    assert n_modes[np.argmax(left)] == -3
    assert dominant_modes(tensor, 0, 0, site=0) == (-3,)

    n_modes, right = mode_spectrum(tensor, 1, 1, site=right_edge)
    assert n_modes[np.argmax(right)] == 3
    assert dominant_modes(tensor, 1, 1, site=right_edge) == (3,)
    assert dominant_modes(tensor, 1, 1, site=right_edge, factor=1e8) == ()


def test_trivial_chain_edges_show_no_dominant_mode():
    params = get_preset("fig4-trivial").params
    tensor = greens_imag_time_obc(params, n_tau=256)
    assert tensor.diagnostics["edge_state_indices"] == []
    assert dominant_modes(tensor, 0, 0, site=0) == ()
    assert dominant_modes(tensor, 1, 1, site=params.n_cells - 1) == ()


def test_obc_routing_and_validation():
    params = ModelParams(t1=1, t2=2, gamma=0.5, n_cells=6, boundary="obc")
    assert greens_imag_time(params, n_max=500, n_tau=16).shape == (2, 2, 6, 16)
    with pytest.raises(ParameterError):
        greens_imag_time_obc(ModelParams(n_cells=6), n_max=500, n_tau=16)


# ---------------------------------------------------------------------------
# 实时间
# ---------------------------------------------------------------------------

def test_real_time_growth_rates():
    config = get_preset("fig5")
    tensor = greens_real_time(config.params, config.time_grid())
    assert tensor.domain is TensorDomain.SPACE_REAL_TIME
    rates = growth_rates(tensor.s_axis, tensor.values[0, 0, config.r])
    assert rates["early"] == pytest.approx(np.pi / 2, rel=0.05)
    assert rates["late"] == pytest.approx(np.sqrt(3.028 ** 2 - 1), rel=0.05)


def test_hermitian_equal_time_occupation():
    params = ModelParams(t1=1, t2=2, gamma=0, n_cells=20)
    tensor = greens_real_time(params, [0.0])
    assert tensor.values[0, 0, 0, 0] == pytest.approx(0.5, abs=1e-4)
    assert tensor.values[1, 1, 0, 0] == pytest.approx(0.5, abs=1e-4)


def test_real_time_validation():
    with pytest.raises(ParameterError):
        greens_real_time(ModelParams(n_cells=4, boundary="obc"), [0.0])
    with pytest.raises(ParameterError):
        greens_real_time(ModelParams(n_cells=4), [])
    with pytest.raises(ParameterError):
        growth_rates([0.0, 1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# 导出
# ---------------------------------------------------------------------------

def test_tensor_csv_export(tmp_path):
    params = ModelParams(t1=1, t2=2, gamma=0.5, n_cells=3)
    tensor = imag_time_spectral(params, n_tau=4)
    path = tensor.to_csv(str(tmp_path / "g.csv"))
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# ")
    assert lines[1].split(",") == ["i", "j", "x", "s", "re", "im"]
    data = np.loadtxt(path, delimiter=",", skiprows=2)
    assert data.shape == (4 * 3 * 4, 6)
    assert set(data[:, 0]) == {1, 2}
    metadata = read_csv_metadata(path)
    assert metadata["domain"] == "space_tau"
    assert metadata["params"]["gamma"] == 0.5


def test_tensor_json_export(tmp_path):
    tensor = greens_matsubara(ModelParams(n_cells=4), 1)
    path = tensor.to_json(str(tmp_path / "g.json"))
    payload = load_from_json(path)
    assert payload["domain"] == "momentum_matsubara"
    assert np.array(payload["re"]).shape == (2, 2, 4, 1)


def test_tensor_is_immutable():
    tensor = greens_matsubara(ModelParams(n_cells=4), 0)
    with pytest.raises(ValueError):
        tensor.values[0, 0, 0, 0] = 1


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
