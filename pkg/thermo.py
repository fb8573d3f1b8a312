"""
热力学模块
配分函数、内能、自由能、熵，β 扫描以及 β 方向振荡的检测
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from errors import BoseConvergenceError, DistributionPoleError, ParameterError
from greens import chemical_potential, distribution
from model import ModelParams, Statistics, spectrum
from utils import parallel_map, to_jsonable, write_csv

logger = logging.getLogger(__name__)

DEFAULT_BETA_GRID = (0.05, 8.0, 400)
MAX_ENUMERATION_MODES = 16
SWEEP_MU_OFFSET = 1e-3


def _freeze(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ThermoSeries:
    """按格点 (2N) 归一化的 U(β), F(β), S(β)"""
    beta_grid: np.ndarray
    U: np.ndarray
    F: np.ndarray
    S: np.ndarray
    mu: np.ndarray
    im_residual: np.ndarray
    params: ModelParams
    normalization: str = "per_site"

    def __post_init__(self):
        for name in ("beta_grid", "U", "F", "S", "mu", "im_residual"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    def metadata(self) -> Dict[str, Any]:
        return to_jsonable({
            "params": self.params.to_dict(),
            "normalization": self.normalization,
            "points": len(self.beta_grid),
            "max_im_residual": float(self.im_residual.max()),
        })

    def to_csv(self, output_path: str) -> str:
        rows = np.column_stack([self.beta_grid, self.U, self.F, self.S, self.mu, self.im_residual])
        return write_csv(output_path, ("beta", "U", "F", "S", "mu", "im_residual"), rows,
                         metadata=self.metadata())


def _shifted(params: ModelParams, eigenvalues, mu: float) -> np.ndarray:
    a = np.asarray(eigenvalues, dtype=complex) - mu
    if params.statistics is Statistics.BOSON and np.any(a.real <= 0):
        worst = a[np.argmin(a.real)]
        raise BoseConvergenceError(
            f"玻色子要求 Re(ε − μ) > 0，实际最小值 {worst.real:.3e} ({params.describe()})")
    return a


def log_partition(params: ModelParams, eigenvalues, mu: float, beta: Optional[float] = None) -> complex:
    """
    log Z = Σ_m −ζ log(1 − ζ e^{−β(ε_m − μ)})，逐模式取主值分支

    Re(β(ε−μ)) < 0 时改写为 −β(ε−μ) + log(e^{β(ε−μ)} − ζ)，实部不受分支影响。
    """
    beta = params.beta if beta is None else beta
    zeta = params.statistics.zeta
    x = beta * _shifted(params, eigenvalues, mu)

    positive = x.real >= 0
    x_pos = np.where(positive, x, 0.0)
    x_neg = np.where(positive, 0.0, x)
    inner = np.where(positive, 1 - zeta * np.exp(-x_pos), np.exp(x_neg) - zeta)
    if np.any(inner == 0):
        raise DistributionPoleError(f"log Z 的对数宗量为零 ({params.describe()})")
    terms = np.where(positive, -zeta * np.log(inner), -zeta * (np.log(inner) - x_neg))
    return complex(terms.sum())


def _energy_sum(params: ModelParams, eigenvalues, mu: float, beta: float) -> complex:
    a = _shifted(params, eigenvalues, mu)
    occupation = distribution(a, beta, params.statistics)
    return complex(np.sum(np.asarray(eigenvalues) * occupation))


def internal_energy(params: ModelParams, eigenvalues, mu: float, beta: Optional[float] = None) -> float:
    """U = Re Σ_m ε_m F(ε_m − μ)"""
    beta = params.beta if beta is None else beta
    total = _energy_sum(params, eigenvalues, mu, beta)
    if abs(total.imag) > 1e-10:
        logger.debug(f"内能虚部残差 {abs(total.imag):.3e} (β={beta:g})")
    return total.real


def free_energy(params: ModelParams, eigenvalues, mu: float, beta: Optional[float] = None) -> float:
    """F = −Re(log Z)/β"""
    beta = params.beta if beta is None else beta
    return -log_partition(params, eigenvalues, mu, beta).real / beta


def entropy(params: ModelParams, eigenvalues, mu: float, beta: Optional[float] = None) -> float:
    """S = β(U − F)，k_B = 1"""
    beta = params.beta if beta is None else beta
    return beta * (internal_energy(params, eigenvalues, mu, beta) - free_energy(params, eigenvalues, mu, beta))


def default_beta_grid() -> np.ndarray:
    low, high, count = DEFAULT_BETA_GRID
    return np.geomspace(low, high, count)


def thermo_sweep(params: ModelParams, beta_grid=None, max_workers: Optional[int] = None,
                 mu_offset: Optional[float] = SWEEP_MU_OFFSET) -> ThermoSeries:
    """
    在 β 网格上计算热力学量（按 2N 归一化）

    每个 β 点独立计算 μ 与各热力学量，线程池保序收集。
    mu_offset 缺省为 1e-3；传 None 时沿用 params.mu_offset。
    """
    if mu_offset is not None:
        params = params.with_changes(mu_offset=mu_offset)
    beta_grid = default_beta_grid() if beta_grid is None else np.asarray(beta_grid, dtype=float)
    if beta_grid.ndim != 1 or beta_grid.size == 0:
        raise ParameterError("beta_grid 必须是非空一维数组")
    if np.any(beta_grid <= 0) or np.any(np.diff(beta_grid) <= 0):
        raise ParameterError("beta_grid 必须为正且严格递增")

    eigenvalues = spectrum(params)
    sites = 2 * params.n_cells
    logger.info(f"热力学扫描开始: {len(beta_grid)} 个 β 点 ({params.describe()})")

    def evaluate(beta: float):
        point = params.with_changes(beta=float(beta))
        mu = chemical_potential(point, eigenvalues)
        log_z = log_partition(point, eigenvalues, mu)
        energy = _energy_sum(point, eigenvalues, mu, point.beta)
        u = energy.real
        f = -log_z.real / point.beta
        residual = max(abs(log_z.imag), abs(energy.imag))
        return u, f, point.beta * (u - f), mu, residual

    results = np.array(parallel_map(evaluate, beta_grid, max_workers=max_workers))
    U, F, S, mu, residual = results.T
    logger.info(f"热力学扫描完成，最大虚部残差 {residual.max():.3e}")
    return ThermoSeries(beta_grid=beta_grid, U=U / sites, F=F / sites, S=S / sites,
                        mu=mu, im_residual=residual / sites, params=params)


def exact_enumeration(eigenvalues, mu: float, beta: float) -> Dict[str, float]:
    """
    费米子占据数穷举（小体系，厄米谱）

    Returns:
        log_partition, internal_energy, free_energy, entropy
    """
    energies = np.asarray(eigenvalues, dtype=float)
    if energies.size > MAX_ENUMERATION_MODES:
        raise ParameterError(f"穷举最多支持 {MAX_ENUMERATION_MODES} 个模式: {energies.size}")
    occupations = np.array(list(itertools.product((0, 1), repeat=energies.size)), dtype=float)
    total_energy = occupations @ energies
    exponent = -beta * (total_energy - mu * occupations.sum(axis=1))
    shift = exponent.max()
    weights = np.exp(exponent - shift)
    partition = weights.sum()
    log_z = float(np.log(partition) + shift)
    u = float((weights * total_energy).sum() / partition)
    f = -log_z / beta
    return {"log_partition": log_z, "internal_energy": u, "free_energy": f, "entropy": beta * (u - f)}


def _uniform_tail(beta, values, tail_fraction: float):
    beta = np.asarray(beta, dtype=float)
    values = np.asarray(values, dtype=float)
    start = beta[0] + (1 - tail_fraction) * (beta[-1] - beta[0])
    mask = beta >= start
    tail_beta, tail_values = beta[mask], values[mask]
    if len(tail_beta) < 8:
        raise ParameterError("β 序列尾部至少需要 8 个点")
    steps = np.diff(tail_beta)
    if np.allclose(steps, steps[0], rtol=1e-6):
        return tail_beta, tail_values
    uniform = np.linspace(tail_beta[0], tail_beta[-1], len(tail_beta))
    return uniform, np.interp(uniform, tail_beta, tail_values)


def _trend_basis(beta: np.ndarray) -> np.ndarray:
    """缓变趋势的最小二乘基: 1、β、β²、1/β、1/β²（各自线性映射到 [−1, 1]）"""
    low, high = beta[0], beta[-1]
    s = (2 * beta - low - high) / (high - low)
    q = (2 / beta - 1 / low - 1 / high) / (1 / low - 1 / high)
    return np.column_stack([np.ones_like(s), s, s ** 2, q, q ** 2])


def beta_oscillation_peaks(beta, values, tail_fraction: float = 0.75, factor: float = 10.0,
                           min_amplitude: float = 5e-4) -> List[Tuple[float, float]]:
    """
    检测 β 序列尾部的振荡

    尾部（必要时插值到同样点数的均匀网格）先用最小二乘减去 β 与 1/β 的二次趋势，
    再加 Hann 窗做 rfft；峰值需为局部极大、超过 factor × 频谱中位数且振幅大于 min_amplitude。

    Returns:
        [(角频率, 振幅), ...]，按振幅降序
    """
    if not 0 < tail_fraction <= 1:
        raise ParameterError(f"tail_fraction 必须在 (0, 1] 内: {tail_fraction}")
    tail_beta, tail_values = _uniform_tail(beta, values, tail_fraction)

    basis = _trend_basis(tail_beta)
    coefficients = np.linalg.lstsq(basis, tail_values, rcond=None)[0]
    window = np.hanning(len(tail_beta))
    magnitude = np.abs(np.fft.rfft((tail_values - basis @ coefficients) * window))
    amplitude = 2 * magnitude / window.sum()
    frequencies = 2 * np.pi * np.fft.rfftfreq(len(tail_beta), d=tail_beta[1] - tail_beta[0])

    threshold = factor * np.median(magnitude[1:])
    peaks = []
    for i in range(1, len(magnitude)):
        left = magnitude[i - 1]
        right = magnitude[i + 1] if i + 1 < len(magnitude) else -np.inf
        if magnitude[i] >= left and magnitude[i] >= right \
                and magnitude[i] > threshold and amplitude[i] > min_amplitude:
            peaks.append((float(frequencies[i]), float(amplitude[i])))
    peaks.sort(key=lambda peak: -peak[1])
    logger.debug(f"β 振荡峰: {peaks[:5]}")
    return peaks
