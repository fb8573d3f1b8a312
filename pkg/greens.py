"""
格林函数模块
Matsubara、虚时间、实空间与实时间格林函数，共振 Matsubara 模式搜索以及化学势规则

约定:
    G̃_n = (−iω_n − μ + H)^{-1}
    G(τ) = (1/β) Σ_n e^{−iω_n τ} G̃_n
    G(r) = (1/N) Σ_k e^{ikr} G(k)
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from errors import (ConvergenceWarning, DistributionPoleError, ParameterError,
                    SingularInverseError)
from model import (Band, Boundary, ModelParams, Statistics, bloch_matrices, dispersion,
                   dispersion_squared, k_grid, open_hamiltonian, spectrum)
from spectral import BiorthogonalSystem, bloch_projectors, decompose, detect_edge_states
from utils import export_to_json, to_jsonable, write_csv

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-14
POLE_TOL = 1e-14
DEFAULT_N_MAX = 10_000
DEFAULT_N_TAU = 512
# 求和时按 k（或模式）分块，限制中间数组大小
CHUNK = 32
MODE_WINDOW = 32
DOMINANCE_FACTOR = 10.0
CONVERGENCE_FACTOR = 10.0


class TensorDomain(str, Enum):
    SPACE_TAU = "space_tau"
    MOMENTUM_MATSUBARA = "momentum_matsubara"
    SPACE_REAL_TIME = "space_real_time"


@dataclass(frozen=True)
class MatsubaraGrid:
    """整数区间 [n_min, n_max] 上的 Matsubara 频率"""
    beta: float
    statistics: Statistics
    n_min: int
    n_max: int

    def __post_init__(self):
        object.__setattr__(self, "statistics", Statistics(self.statistics))
        if not self.beta > 0:
            raise ParameterError(f"beta 必须为正: {self.beta}")
        if self.n_min > self.n_max:
            raise ParameterError(f"空 Matsubara 区间: [{self.n_min}, {self.n_max}]")

    @classmethod
    def symmetric(cls, beta: float, statistics: Statistics, n_max: int) -> "MatsubaraGrid":
        return cls(beta, statistics, -int(n_max), int(n_max))

    @property
    def parity(self) -> int:
        return 0 if self.statistics is Statistics.BOSON else 1

    @property
    def n_values(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    @property
    def modes(self) -> np.ndarray:
        """n_M = 2n（玻色）或 2n+1（费米）"""
        return 2 * self.n_values + self.parity

    @property
    def frequencies(self) -> np.ndarray:
        return np.pi / self.beta * self.modes


@dataclass(frozen=True)
class GreensTensor:
    """
    格林函数数据 values[i, j, x, s]

    i, j 为子晶格（内部 0 起，导出时 1 起），x 为空间/动量指标，s 为虚时/Matsubara/实时间指标。
    """
    values: np.ndarray = field(repr=False)
    domain: TensorDomain
    params: ModelParams
    mu: float
    x_axis: np.ndarray = field(repr=False)
    s_axis: np.ndarray = field(repr=False)
    skipped_k: Tuple[float, ...] = ()
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.ndim != 4 or values.shape[:2] != (2, 2):
            raise ParameterError(f"格林函数张量形状应为 (2, 2, X, S): {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "domain", TensorDomain(self.domain))
        for name in ("x_axis", "s_axis"):
            axis = np.array(getattr(self, name))
            axis.setflags(write=False)
            object.__setattr__(self, name, axis)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def component(self, i: int, j: int) -> np.ndarray:
        return self.values[i, j]

    def metadata(self) -> Dict[str, Any]:
        return to_jsonable({
            "domain": self.domain.value,
            "params": self.params.to_dict(),
            "mu": self.mu,
            "shape": list(self.shape),
            "x_axis": self.x_axis,
            "s_axis": self.s_axis,
            "skipped_k": list(self.skipped_k),
            "diagnostics": self.diagnostics,
        })

    def to_csv(self, output_path: str) -> str:
        """列顺序 i, j, x, s, re, im；第一行为 "# " + JSON 元数据"""
        index = np.indices(self.shape).reshape(4, -1)
        flat = self.values.reshape(-1)
        rows = np.column_stack([index[0] + 1, index[1] + 1, index[2], index[3], flat.real, flat.imag])
        return write_csv(output_path, ("i", "j", "x", "s", "re", "im"), rows,
                         metadata=self.metadata(), fmt=["%d"] * 4 + ["%.17g"] * 2)

    def to_json(self, output_path: str) -> str:
        payload = self.metadata()
        payload["re"] = self.values.real
        payload["im"] = self.values.imag
        if not export_to_json(payload, output_path):
            raise OSError(f"无法写入 {output_path}")
        return output_path


@dataclass(frozen=True)
class ResonanceEntry:
    n_mode: int
    k: float
    energy: complex
    band: Band


@dataclass(frozen=True)
class ResonanceReport:
    modes: Tuple[ResonanceEntry, ...]
    mu_used: float
    tol_re: float
    tol_im: float

    @property
    def n_modes(self) -> Tuple[int, ...]:
        return tuple(sorted({entry.n_mode for entry in self.modes}))

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({
            "n_modes": list(self.n_modes),
            "mu_used": self.mu_used,
            "tol_re": self.tol_re,
            "tol_im": self.tol_im,
            "entries": [
                {"n_mode": e.n_mode, "k": e.k, "energy": e.energy, "band": e.band.value}
                for e in self.modes
            ],
        })


def matsubara_frequency(beta: float, statistics: Statistics, n):
    """ω_n = (π/β)·2n（玻色）或 (π/β)·(2n+1)（费米）"""
    if not beta > 0:
        raise ParameterError(f"beta 必须为正: {beta}")
    parity = 0 if Statistics(statistics) is Statistics.BOSON else 1
    omega = np.pi / beta * (2 * np.asarray(n) + parity)
    return float(omega) if omega.ndim == 0 else omega


def chemical_potential(params: ModelParams, eigenvalues) -> float:
    """
    费米子: μ = −mu_offset
    玻色子: μ = min Re ε − mu_offset
    """
    eigenvalues = np.asarray(eigenvalues)
    if eigenvalues.size == 0:
        raise ParameterError("谱为空，无法确定化学势")
    if params.statistics is Statistics.FERMION:
        return -params.mu_offset
    return float(eigenvalues.real.min()) - params.mu_offset


def distribution(a, beta: float, statistics: Statistics):
    """
    复变量上的 Bose-Einstein / Fermi-Dirac 分布 F(a) = 1/(e^{βa} − ζ)

    Re a > 0 时用 e^{−βa}/(1 − ζe^{−βa}) 避免溢出。
    """
    zeta = Statistics(statistics).zeta
    a = np.asarray(a, dtype=complex)
    positive = a.real > 0
    decaying = np.exp(-beta * np.where(positive, a, 0.0))
    growing = np.exp(beta * np.where(positive, 0.0, a))
    denominator = np.where(positive, 1 - zeta * decaying, growing - zeta)
    if np.any(np.abs(denominator) < POLE_TOL):
        bad = a[np.abs(denominator) < POLE_TOL].ravel()[0]
        raise DistributionPoleError(f"分布函数落在极点上: β(ε−μ) = {beta * bad:.6g}")
    value = np.where(positive, decaying, 1.0) / denominator
    return complex(value) if value.ndim == 0 else value


def _imag_time_weights(a: np.ndarray, beta: float, zeta: int, tau: np.ndarray) -> np.ndarray:
    """
    单模式虚时传播子 g(a, τ) = e^{a(β−τ)}/(e^{βa} − ζ)，τ ∈ [0, β]，τ=0 处为 0⁺ 极限

    Returns:
        形状 a.shape + tau.shape
    """
    a = np.asarray(a, dtype=complex)[..., None]
    positive = a.real > 0
    a_pos = np.where(positive, a, 0.0)
    a_neg = np.where(positive, 0.0, a)
    denominator = np.where(positive, 1 - zeta * np.exp(-beta * a_pos), np.exp(beta * a_neg) - zeta)
    if np.any(np.abs(denominator) < POLE_TOL):
        raise DistributionPoleError("虚时传播子的分母为零（模式恰好共振且无化学势偏移）")
    numerator = np.where(positive, np.exp(-a_pos * tau), np.exp(a_neg * (beta - tau)))
    return numerator / denominator


def _fold_matsubara(coefficients: np.ndarray, n0: int, beta: float, parity: int,
                    n_tau: int) -> np.ndarray:
    """
    (1/β) Σ_n c_n e^{−iω_n τ_j}，τ_j = jβ/M

    coefficients 最后一维按 n = n0, n0+1, ... 排列；按 n mod M 折叠后做一次 FFT。
    """
    length = coefficients.shape[-1]
    pad = (-length) % n_tau
    if pad:
        coefficients = np.concatenate(
            [coefficients, np.zeros(coefficients.shape[:-1] + (pad,), dtype=complex)], axis=-1)
    folded = coefficients.reshape(coefficients.shape[:-1] + (-1, n_tau)).sum(axis=-2)
    j = np.arange(n_tau)
    shift = np.exp(-2j * np.pi * ((n0 * j) % n_tau) / n_tau)
    half = np.exp(-1j * np.pi * parity * j / n_tau)
    return np.fft.fft(folded, axis=-1) * shift * half / beta


def _adjugate(h: np.ndarray) -> np.ndarray:
    adj = np.empty_like(h)
    adj[..., 0, 0] = h[..., 1, 1]
    adj[..., 1, 1] = h[..., 0, 0]
    adj[..., 0, 1] = -h[..., 0, 1]
    adj[..., 1, 0] = -h[..., 1, 0]
    return adj


def _require(params: ModelParams, boundary: Boundary, operation: str):
    if params.boundary is not boundary:
        raise ParameterError(f"{operation} 需要 {boundary.value.upper()} 边界条件 ({params.describe()})")


def _check_grid(n_max: int, n_tau: int):
    if int(n_max) < 1:
        raise ParameterError(f"n_max 必须 ≥ 1: {n_max}")
    if int(n_tau) < 2:
        raise ParameterError(f"n_tau 必须 ≥ 2: {n_tau}")


def _pbc_mu(params: ModelParams) -> float:
    return chemical_potential(params, spectrum(params))


def _tau_grid(beta: float, n_tau: int) -> np.ndarray:
    return beta * np.arange(n_tau) / n_tau


def _momentum_to_space(g_k: np.ndarray) -> np.ndarray:
    """(K, 2, 2, S) 的 k 分量 → (2, 2, N, S) 的实空间分量"""
    return np.transpose(np.fft.ifft(g_k, axis=0), (1, 2, 0, 3))


def greens_matsubara(params: ModelParams, n: int) -> GreensTensor:
    """单个 Matsubara 频率上的 G̃_n(k)（直接 2×2 求逆）"""
    return greens_matsubara_map(params, [n])


def greens_matsubara_map(params: ModelParams, n_values: Sequence[int]) -> GreensTensor:
    """
    (k, n) 平面上的 G̃_n(k)

    (z + H)^{-1} = (z𝕀 + adj H)/(z² − ε²)，z = −iω_n − μ
    """
    _require(params, Boundary.PBC, "greens_matsubara")
    n_values = np.atleast_1d(np.asarray(n_values, dtype=int))
    ks = k_grid(params.n_cells)
    h = bloch_matrices(params, ks)
    mu = _pbc_mu(params)

    z = -1j * matsubara_frequency(params.beta, params.statistics, n_values) - mu
    det = z[None, :] ** 2 - dispersion_squared(params, ks)[:, None]
    if np.any(np.abs(det) < SINGULAR_TOL):
        k_index, n_index = np.argwhere(np.abs(det) < SINGULAR_TOL)[0]
        raise SingularInverseError(
            f"(−iω_n − μ + H) 不可逆: k={ks[k_index]:.6g}, n={n_values[n_index]} ({params.describe()})")

    adj = np.transpose(_adjugate(h), (1, 2, 0))[..., None]
    identity = np.eye(2)[:, :, None, None]
    values = (identity * z[None, None, None, :] + adj) / det[None, None]
    logger.debug(f"G̃_n(k) 组装完成: {len(ks)} 个 k 点 × {len(n_values)} 个频率")
    return GreensTensor(values, TensorDomain.MOMENTUM_MATSUBARA, params, mu,
                        x_axis=ks, s_axis=n_values)


def greens_matsubara_spectral(params: ModelParams, n: int) -> GreensTensor:
    """
    谱分解形式 Σ_m P_m(k)/(−iω_n − μ + ε_m)

    距奇异点过近的 k 点记入 skipped_k，其值为 NaN。
    """
    _require(params, Boundary.PBC, "greens_matsubara_spectral")
    ks = k_grid(params.n_cells)
    eigenvalues, projectors, valid = bloch_projectors(params, ks)
    mu = _pbc_mu(params)
    z = -1j * matsubara_frequency(params.beta, params.statistics, n) - mu

    denominator = np.where(valid[:, None], z + eigenvalues, 1.0)
    if np.any(np.abs(denominator) < SINGULAR_TOL):
        raise SingularInverseError(f"谱分母为零: n={n} ({params.describe()})")
    g_k = np.einsum("kmab,km->kab", projectors, 1.0 / denominator)
    g_k[~valid] = np.nan
    values = np.transpose(g_k, (1, 2, 0))[..., None]
    skipped = tuple(float(k) for k in ks[~valid])
    return GreensTensor(values, TensorDomain.MOMENTUM_MATSUBARA, params, mu,
                        x_axis=ks, s_axis=np.array([n]), skipped_k=skipped)


# ---------------------------------------------------------------------------
# 虚时间：两条独立路径
# ---------------------------------------------------------------------------

def _pbc_matsubara_sum_k(params: ModelParams, n_max: int, n_tau: int, mu: float) -> np.ndarray:
    """路径 (a)：截断 Matsubara 求和，返回 (K, 2, 2, M)"""
    ks = k_grid(params.n_cells)
    h = bloch_matrices(params, ks)
    disc = dispersion_squared(params, ks)
    grid = MatsubaraGrid.symmetric(params.beta, params.statistics, n_max)
    z = -1j * grid.frequencies - mu

    scalar = np.empty((len(ks), n_tau), dtype=complex)
    linear = np.empty((len(ks), n_tau), dtype=complex)
    for start in range(0, len(ks), CHUNK):
        block = slice(start, start + CHUNK)
        det = z[None, :] ** 2 - disc[block, None]
        if np.any(np.abs(det) < SINGULAR_TOL):
            raise SingularInverseError(f"(−iω_n − μ + H) 不可逆 ({params.describe()})")
        scalar[block] = _fold_matsubara(1.0 / det, grid.n_min, params.beta, grid.parity, n_tau)
        linear[block] = _fold_matsubara(z[None, :] / det, grid.n_min, params.beta, grid.parity, n_tau)

    return (_adjugate(h)[..., None] * scalar[:, None, None, :]
            + np.eye(2)[None, :, :, None] * linear[:, None, None, :])


def _pbc_spectral_k(params: ModelParams, tau: np.ndarray, mu: float):
    """路径 (b)：闭式谱表示，返回 ((K, 2, 2, M), valid)"""
    ks = k_grid(params.n_cells)
    eigenvalues, projectors, valid = bloch_projectors(params, ks)
    if not valid.all():
        logger.warning(f"跳过 {np.count_nonzero(~valid)} 个接近奇异点的 k 点 ({params.describe()})")
    a = np.where(valid[:, None], eigenvalues - mu, 1.0)
    weights = _imag_time_weights(a, params.beta, params.statistics.zeta, tau)
    return np.einsum("kmab,kms->kabs", projectors, weights), valid


def _obc_mode_sum(system: BiorthogonalSystem, params: ModelParams, n_max: int, n_tau: int,
                  mu: float) -> np.ndarray:
    """OBC 路径 (a)：每个模式的 (1/β) Σ_n e^{−iω_nτ}/(z_n + ε_m)，返回 (2N, M)"""
    grid = MatsubaraGrid.symmetric(params.beta, params.statistics, n_max)
    z = -1j * grid.frequencies - mu
    eigenvalues = system.eigenvalues
    series = np.empty((len(eigenvalues), n_tau), dtype=complex)
    for start in range(0, len(eigenvalues), CHUNK):
        block = slice(start, start + CHUNK)
        denominator = z[None, :] + eigenvalues[block, None]
        if np.any(np.abs(denominator) < SINGULAR_TOL):
            raise SingularInverseError(f"(−iω_n − μ + H) 不可逆 ({params.describe()})")
        series[block] = _fold_matsubara(1.0 / denominator, grid.n_min, params.beta, grid.parity, n_tau)
    return series


def _local_blocks(system: BiorthogonalSystem, mode_series: np.ndarray) -> np.ndarray:
    """Σ_m φ_R φ_L† h_m(s) 的胞内 2×2 块，返回 (2, 2, N, S)"""
    n_cells = system.size // 2
    right = system.right_vectors.reshape(n_cells, 2, -1)
    left = system.left_vectors.conj().reshape(n_cells, 2, -1)
    return np.einsum("xim,xjm,ms->ijxs", right, left, mode_series)


def _obc_system(params: ModelParams) -> BiorthogonalSystem:
    _require(params, Boundary.OBC, "OBC 格林函数")
    logger.info(f"开链双正交分解: 2N = {2 * params.n_cells}")
    return decompose(open_hamiltonian(params).matrix)


def _obc_mu(params: ModelParams, system: BiorthogonalSystem) -> float:
    if params.statistics is Statistics.BOSON:
        logger.warning("开链玻色子: 化学势取开链谱的最小实部")
    return chemical_potential(params, system.eigenvalues)


def imag_time_matsubara_sum(params: ModelParams, n_max: int = DEFAULT_N_MAX,
                            n_tau: int = DEFAULT_N_TAU) -> GreensTensor:
    """
    路径 (a)：G(τ_j) = (1/β) Σ_{n=−n_max}^{n_max} e^{−iω_n τ_j} G̃_n

    τ=0 处截断级数收敛到 G(0⁺) 与 ζG(β⁻) 的平均值。
    """
    _check_grid(n_max, n_tau)
    tau = _tau_grid(params.beta, n_tau)
    if params.boundary is Boundary.OBC:
        system = _obc_system(params)
        mu = _obc_mu(params, system)
        values = _local_blocks(system, _obc_mode_sum(system, params, n_max, n_tau, mu))
        return GreensTensor(values, TensorDomain.SPACE_TAU, params, mu,
                            x_axis=np.arange(params.n_cells), s_axis=tau,
                            diagnostics={"path": "matsubara_sum", "n_max": int(n_max)})

    mu = _pbc_mu(params)
    values = _momentum_to_space(_pbc_matsubara_sum_k(params, n_max, n_tau, mu))
    return GreensTensor(values, TensorDomain.SPACE_TAU, params, mu,
                        x_axis=np.arange(params.n_cells), s_axis=tau,
                        diagnostics={"path": "matsubara_sum", "n_max": int(n_max)})


def imag_time_spectral(params: ModelParams, n_tau: int = DEFAULT_N_TAU, tau=None) -> GreensTensor:
    """
    路径 (b)：G(τ) = Σ_m φ_R φ_L† e^{(ε_m−μ)(β−τ)}/(e^{β(ε_m−μ)} − ζ)

    Args:
        params: 模型参数
        n_tau: 均匀网格 τ_j = jβ/M 的点数
        tau: 可选的 τ 数组（取值于 [0, β]），给出时忽略 n_tau
    """
    if tau is None:
        _check_grid(1, n_tau)
        tau = _tau_grid(params.beta, n_tau)
    else:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any(tau < 0) or np.any(tau > params.beta):
            raise ParameterError(f"τ 必须在 [0, β] 内 (β={params.beta:g})")
    zeta = params.statistics.zeta
    if params.boundary is Boundary.OBC:
        system = _obc_system(params)
        mu = _obc_mu(params, system)
        weights = _imag_time_weights(system.eigenvalues - mu, params.beta, zeta, tau)
        return GreensTensor(_local_blocks(system, weights), TensorDomain.SPACE_TAU, params, mu,
                            x_axis=np.arange(params.n_cells), s_axis=tau,
                            diagnostics={"path": "spectral"})

    mu = _pbc_mu(params)
    g_k, valid = _pbc_spectral_k(params, tau, mu)
    skipped = tuple(float(k) for k in k_grid(params.n_cells)[~valid])
    return GreensTensor(_momentum_to_space(g_k), TensorDomain.SPACE_TAU, params, mu,
                        x_axis=np.arange(params.n_cells), s_axis=tau, skipped_k=skipped,
                        diagnostics={"path": "spectral"})


def expected_truncation_error(beta: float, n_max: int, tau: np.ndarray) -> np.ndarray:
    """截断 Matsubara 级数在 τ ∈ (0, β) 的误差量级 1/(π n_max sin(πτ/β))"""
    return 1.0 / (np.pi * n_max * np.sin(np.pi * np.asarray(tau) / beta))


def _compare_paths(summed: np.ndarray, closed: np.ndarray, beta: float, n_max: int,
                   tau: np.ndarray, label: str) -> Dict[str, float]:
    """
    比较两条路径（τ_0 = 0 除外），差异超过误差估计 10 倍时发出 ConvergenceWarning

    summed / closed 的最后一维为 τ，其余维度逐点比较。
    """
    interior = slice(1, None)
    difference = np.abs(summed[..., interior] - closed[..., interior])
    difference = difference.reshape(-1, difference.shape[-1]).max(axis=0)
    expected = expected_truncation_error(beta, n_max, tau[interior])
    ratio = float((difference / expected).max())
    report = {
        "max_abs_difference": float(difference.max()),
        "max_error_ratio": ratio,
        "expected_error_min": float(expected.min()),
    }
    logger.info(f"{label}: 两条路径最大差异 {report['max_abs_difference']:.3e}，"
                f"相对误差估计 {ratio:.2f} 倍")
    if ratio > CONVERGENCE_FACTOR:
        warnings.warn(
            f"{label}: Matsubara 求和与闭式表示的差异为截断误差估计的 {ratio:.1f} 倍",
            ConvergenceWarning, stacklevel=3)
    return report


def greens_imag_time(params: ModelParams, n_max: int = DEFAULT_N_MAX,
                     n_tau: int = DEFAULT_N_TAU) -> GreensTensor:
    """
    实空间虚时间格林函数 G^{(i,j)}(r, τ)

    返回截断 Matsubara 求和（路径 a）的结果，并在 k 空间与闭式谱表示（路径 b）逐点比较，
    比较结果写入 diagnostics。OBC 参数转交 greens_imag_time_obc。
    """
    if params.boundary is Boundary.OBC:
        return greens_imag_time_obc(params, n_max, n_tau)
    _check_grid(n_max, n_tau)
    logger.info(f"虚时间格林函数: {params.describe()}, n_max={n_max}, M={n_tau}")

    mu = _pbc_mu(params)
    tau = _tau_grid(params.beta, n_tau)
    summed = _pbc_matsubara_sum_k(params, n_max, n_tau, mu)
    closed, valid = _pbc_spectral_k(params, tau, mu)
    comparison = _compare_paths(summed[valid], closed[valid], params.beta, n_max, tau, "PBC 虚时间")

    skipped = tuple(float(k) for k in k_grid(params.n_cells)[~valid])
    return GreensTensor(_momentum_to_space(summed), TensorDomain.SPACE_TAU, params, mu,
                        x_axis=np.arange(params.n_cells), s_axis=tau, skipped_k=skipped,
                        diagnostics={"path": "matsubara_sum", "n_max": int(n_max), **comparison})


def greens_imag_time_obc(params: ModelParams, n_max: int = DEFAULT_N_MAX,
                         n_tau: int = DEFAULT_N_TAU) -> GreensTensor:
    """
    开链的格点分辨虚时间格林函数

    values[i, j, x, s] = G_{2x+i, 2x+j}(τ_s)，即第 x 个元胞内的 2×2 块。
    """
    _check_grid(n_max, n_tau)
    logger.info(f"开链虚时间格林函数: {params.describe()}, n_max={n_max}, M={n_tau}")
    system = _obc_system(params)
    mu = _obc_mu(params, system)
    tau = _tau_grid(params.beta, n_tau)

    summed = _local_blocks(system, _obc_mode_sum(system, params, n_max, n_tau, mu))
    weights = _imag_time_weights(system.eigenvalues - mu, params.beta, params.statistics.zeta, tau)
    closed = _local_blocks(system, weights)
    comparison = _compare_paths(summed, closed, params.beta, n_max, tau, "OBC 虚时间")

    edges = detect_edge_states(system)
    diagnostics = {
        "path": "matsubara_sum",
        "n_max": int(n_max),
        "edge_state_indices": list(edges.indices),
        "edge_state_energies": edges.energies,
        "min_condition": float(system.condition.min()),
        **comparison,
    }
    return GreensTensor(summed, TensorDomain.SPACE_TAU, params, mu,
                        x_axis=np.arange(params.n_cells), s_axis=tau, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# 实时间
# ---------------------------------------------------------------------------

def greens_real_time(params: ModelParams, t_grid) -> GreensTensor:
    """G(r, t) = (1/N) Σ_k e^{ikr} Σ_m P_m(k) F(ε_m − μ) e^{−iε_m t}"""
    _require(params, Boundary.PBC, "greens_real_time")
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ParameterError("t_grid 必须是非空一维数组")

    ks = k_grid(params.n_cells)
    eigenvalues, projectors, valid = bloch_projectors(params, ks)
    if not valid.all():
        logger.warning(f"跳过 {np.count_nonzero(~valid)} 个接近奇异点的 k 点")
    mu = _pbc_mu(params)
    occupation = distribution(np.where(valid[:, None], eigenvalues - mu, 1.0),
                              params.beta, params.statistics)
    phases = np.exp(-1j * eigenvalues[..., None] * times)
    g_k = np.einsum("kmab,km,kmt->kabt", projectors, occupation, phases)
    logger.info(f"实时间格林函数完成: {len(times)} 个时间点")
    return GreensTensor(_momentum_to_space(g_k), TensorDomain.SPACE_REAL_TIME, params, mu,
                        x_axis=np.arange(params.n_cells), s_axis=times,
                        skipped_k=tuple(float(k) for k in ks[~valid]))


def growth_rates(times, values, early: Tuple[float, float] = (0.5, 6.0),
                 late: Tuple[float, float] = (60.0, 100.0)) -> Dict[str, float]:
    """log|G(t)| 在早期与晚期时间窗内的线性拟合斜率"""
    times = np.asarray(times, dtype=float)
    log_magnitude = np.log(np.abs(np.asarray(values)))
    rates = {}
    for label, (low, high) in (("early", early), ("late", late)):
        mask = (times >= low) & (times <= high) & np.isfinite(log_magnitude)
        if np.count_nonzero(mask) < 2:
            raise ParameterError(f"时间窗 [{low}, {high}] 内的采样点不足")
        rates[label] = float(np.polyfit(times[mask], log_magnitude[mask], 1)[0])
    return rates


def distribution_plane(beta: float, statistics: Statistics,
                       re_range: Tuple[float, float] = (-1.0, 1.0),
                       im_range: Tuple[float, float] = (-4.0, 4.0),
                       n_re: int = 200, n_im: int = 400):
    """
    |F(a)| 在复平面矩形网格上的取值

    n_re 为偶数时网格不含虚轴，避开 a = iω_n 上的极点。

    Returns:
        (Re a 网格, Im a 网格, |F| 数组)，三者形状均为 (n_im, n_re)
    """
    if n_re < 2 or n_im < 2:
        raise ParameterError(f"复平面网格至少 2×2: {n_re}×{n_im}")
    re, im = np.meshgrid(np.linspace(*re_range, n_re), np.linspace(*im_range, n_im))
    return re, im, np.abs(distribution(re + 1j * im, beta, statistics))


def distribution_on_spectrum(params: ModelParams) -> np.ndarray:
    """
    各 (k, 能带) 本征值处的 |F(ε − μ)|

    Returns:
        列为 k, band(+1/−1), Re ε, Im ε, |F| 的数组
    """
    _require(params, Boundary.PBC, "distribution_on_spectrum")
    ks = k_grid(params.n_cells)
    mu = _pbc_mu(params)
    rows = []
    for band, sign in ((Band.MINUS, -1), (Band.PLUS, 1)):
        energies = dispersion(params, ks, band)
        magnitude = np.abs(distribution(energies - mu, params.beta, params.statistics))
        rows.append(np.column_stack([ks, np.full(len(ks), sign), energies.real,
                                     energies.imag, magnitude]))
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# 共振与振荡分析
# ---------------------------------------------------------------------------

def find_resonances(params: ModelParams, tol_re: Optional[float] = None,
                    tol_im: Optional[float] = None) -> ResonanceReport:
    """
    扫描 k 网格与两条能带，寻找满足 Re ε ≈ μ 且 Im ε ≈ πn_M/β 的 Matsubara 模式

    网格点在容差内直接命中；相邻网格点间 Im ε − ω 变号时用 brentq 求出 k*，再检查 Re ε(k*)。
    每个 (n_M, 能带) 只记录一个条目。
    """
    _require(params, Boundary.PBC, "find_resonances")
    beta, n_cells = params.beta, params.n_cells
    resolution = 2 * np.pi / (beta * n_cells)
    tol_re = resolution if tol_re is None else tol_re
    tol_im = resolution if tol_im is None else tol_im
    mu = _pbc_mu(params)
    parity = 0 if params.statistics is Statistics.BOSON else 1

    ks = k_grid(n_cells)
    extended = np.append(ks, 2 * np.pi)
    entries = []
    for band in (Band.MINUS, Band.PLUS):
        energies = dispersion(params, extended, band)
        limit = math.ceil(beta / np.pi * np.abs(energies.imag).max()) + 1
        for n_mode in range(-limit, limit + 1):
            if (n_mode - parity) % 2:
                continue
            omega = np.pi * n_mode / beta
            offset = energies.imag - omega
            hits = np.flatnonzero((np.abs(offset[:-1]) < tol_im)
                                  & (np.abs(energies.real[:-1] - mu) < tol_re))
            if hits.size:
                best = hits[np.argmin(np.abs(offset[hits]))]
                entries.append(ResonanceEntry(n_mode, float(ks[best]), complex(energies[best]), band))
                continue
            for i in np.flatnonzero(offset[:-1] * offset[1:] < 0):
                k_star = brentq(lambda k: dispersion(params, k, band).imag - omega,
                                extended[i], extended[i + 1], xtol=1e-14)
                energy = dispersion(params, k_star, band)
                if abs(energy.real - mu) < tol_re:
                    entries.append(ResonanceEntry(n_mode, float(k_star), energy, band))
                    break

    entries.sort(key=lambda e: (e.n_mode, e.band.value))
    report = ResonanceReport(tuple(entries), mu, tol_re, tol_im)
    logger.info(f"共振 Matsubara 模式: {list(report.n_modes)} ({params.describe()})")
    return report


def _require_tau(tensor: GreensTensor, operation: str):
    if tensor.domain is not TensorDomain.SPACE_TAU:
        raise ParameterError(f"{operation} 需要虚时间张量，实际为 {tensor.domain.value}")


def _mode_window(params: ModelParams, window: int) -> np.ndarray:
    parity = 0 if params.statistics is Statistics.BOSON else 1
    n_modes = np.arange(-window, window + 1)
    return n_modes[(n_modes - parity) % 2 == 0]


def _tau_coefficients(tensor: GreensTensor, series: np.ndarray, n_modes: np.ndarray) -> np.ndarray:
    """c(n_M) = (β/M) Σ_j G(τ_j) e^{iπ n_M j/M}，作用在 series 的最后一维"""
    n_tau = tensor.shape[-1]
    phase = np.exp(1j * np.pi * np.outer(np.arange(n_tau), n_modes) / n_tau)
    return tensor.params.beta / n_tau * series @ phase


def mode_spectrum(tensor: GreensTensor, i: int, j: int, site: Optional[int] = None,
                  window: int = MODE_WINDOW):
    """
    虚时间序列的 Matsubara 分量幅值 |c(n_M)|

    PBC 张量先变换回 k 空间，返回各 k 上的最大幅值；OBC 张量取指定格点（缺省为所有格点的最大值）。

    Returns:
        (n_M 数组, 幅值数组)
    """
    _require_tau(tensor, "mode_spectrum")
    params = tensor.params
    n_modes = _mode_window(params, window)

    series = tensor.component(i, j)
    if params.boundary is Boundary.PBC:
        series = np.fft.fft(series, axis=0)
    elif site is not None:
        series = series[site:site + 1]
    return n_modes, np.abs(_tau_coefficients(tensor, series, n_modes)).max(axis=0)


def dominant_modes(tensor: GreensTensor, i: int, j: int, site: Optional[int] = None,
                   factor: float = DOMINANCE_FACTOR, window: int = MODE_WINDOW) -> Tuple[int, ...]:
    """
    |c(n_M)|·|z_n| 超过 factor 的 Matsubara 模式，z_n = −iω_n − μ

    远离极点时 c(n_M) 按 1/z_n 衰减，归一化后的背景约为 1。
    """
    n_modes, magnitudes = mode_spectrum(tensor, i, j, site, window)
    z = -1j * np.pi * n_modes / tensor.params.beta - tensor.mu
    score = magnitudes * np.abs(z)
    return tuple(int(n) for n in n_modes[score > factor])


def resonant_modes(tensor: GreensTensor, tol_re: Optional[float] = None,
                   tol_im: Optional[float] = None, window: int = MODE_WINDOW) -> Tuple[int, ...]:
    """
    从 PBC 虚时间张量中识别共振 Matsubara 模式

    每个 k 上的 2×2 分量 C_n(k) ≈ (z_n + H(k))^{-1}，其行列式的倒数 w = z_n² − ε(k)²。
    把 w 沿 k 圈（含首尾相接的一段）线性插值，取每段上模最小的点 w*，
    极点偏移 δ = z_n ± sqrt(z_n² − w*) = (Re ε − μ) + i(Im ε − ω_n)。
    任一段上 |Re δ| < tol_re 且 |Im δ| < tol_im 的模式记为共振，容差缺省为 2π/(βN)。
    """
    _require_tau(tensor, "resonant_modes")
    params = tensor.params
    _require(params, Boundary.PBC, "resonant_modes")
    resolution = 2 * np.pi / (params.beta * params.n_cells)
    tol_re = resolution if tol_re is None else tol_re
    tol_im = resolution if tol_im is None else tol_im

    n_modes = _mode_window(params, window)
    blocks = _tau_coefficients(tensor, np.fft.fft(tensor.values, axis=2), n_modes)
    z = -1j * np.pi * n_modes / params.beta - tensor.mu

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        det = blocks[0, 0] * blocks[1, 1] - blocks[0, 1] * blocks[1, 0]
        w = np.where(det != 0, 1.0 / det, np.nan)
        step = np.roll(w, -1, axis=0) - w
        t = np.clip(-(np.conj(w) * step).real / np.abs(step) ** 2, 0.0, 1.0)
        closest = w + np.where(np.isfinite(t), t, 0.0) * step
        root = np.sqrt(z ** 2 - closest)
        offsets = np.stack([z + root, z - root])
        hit = (np.abs(offsets.real) < tol_re) & (np.abs(offsets.imag) < tol_im)

    found = tuple(int(n) for n in n_modes[hit.any(axis=(0, 1))])
    logger.debug(f"虚时间张量中的共振模式: {list(found)}")
    return found
