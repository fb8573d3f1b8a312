"""
增益/损耗 SSH 模型
构造 Bloch 哈密顿量与开链哈密顿量、解析色散关系以及 PT 相分类

单位约定: ħ = a = k_B = 1
"""

import logging
from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from typing import Dict, Any, Union

import numpy as np
import scipy.linalg

from errors import ParameterError

logger = logging.getLogger(__name__)

PHASE_TOL = 1e-12


class Boundary(str, Enum):
    PBC = "pbc"
    OBC = "obc"


class Statistics(str, Enum):
    BOSON = "boson"
    FERMION = "fermion"

    @property
    def zeta(self) -> int:
        """玻色子 +1，费米子 -1"""
        return 1 if self is Statistics.BOSON else -1


class Band(str, Enum):
    PLUS = "plus"
    MINUS = "minus"


class PhaseLabel(str, Enum):
    REAL_LINE_GAP = "real_line_gap"
    GAPLESS = "gapless"
    MIXED_BROKEN = "mixed_broken"
    FULLY_IMAGINARY = "fully_imaginary"
    IMAGINARY_LINE_GAP = "imaginary_line_gap"

    @property
    def is_gapless(self) -> bool:
        return self in (PhaseLabel.GAPLESS, PhaseLabel.FULLY_IMAGINARY)


@dataclass(frozen=True)
class ModelParams:
    """
    物理与数值参数

    Args:
        t1: 胞内跃迁
        t2: 胞间跃迁
        gamma: 增益/损耗强度
        n_cells: 元胞数 N
        boundary: 边界条件 (PBC / OBC)
        statistics: 统计 (玻色 / 费米)
        beta: 逆温度
        mu_offset: 化学势正则化偏移 (μ 额外减去该值)
    """
    t1: float = 1.0
    t2: float = 2.0
    gamma: float = 0.0
    n_cells: int = 200
    boundary: Boundary = Boundary.PBC
    statistics: Statistics = Statistics.FERMION
    beta: float = 2 * np.pi
    mu_offset: float = 1e-5

    def __post_init__(self):
        # 允许从字符串构造枚举
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "statistics", Statistics(self.statistics))

        # t1 = 0 是完全二聚化极限，仍然允许
        if not self.t1 >= 0:
            raise ParameterError(f"t1 必须非负: t1={self.t1}")
        if not self.t2 > 0:
            raise ParameterError(f"t2 必须为正: t2={self.t2}")
        if not self.gamma >= 0:
            raise ParameterError(f"gamma 必须非负: gamma={self.gamma}")
        if not self.beta > 0:
            raise ParameterError(f"beta 必须为正: beta={self.beta}")
        if not self.mu_offset > 0:
            raise ParameterError(f"mu_offset 必须为正: mu_offset={self.mu_offset}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ParameterError(f"n_cells 必须是不小于 2 的整数: n_cells={self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    def with_changes(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["boundary"] = self.boundary.value
        data["statistics"] = self.statistics.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelParams":
        return cls(**data)

    def describe(self) -> str:
        """用于日志与错误信息的简短描述"""
        return (f"t1={self.t1:g}, t2={self.t2:g}, gamma={self.gamma:g}, N={self.n_cells}, "
                f"{self.boundary.value}, {self.statistics.value}, beta={self.beta:g}")


@dataclass(frozen=True)
class BlochHamiltonian:
    k: float
    matrix: np.ndarray = field(repr=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return scipy.linalg.eigvals(self.matrix)


@dataclass(frozen=True)
class OpenChainHamiltonian:
    """开链哈密顿量，格点顺序 A1, B1, A2, B2, ..."""
    n_cells: int
    matrix: np.ndarray = field(repr=False)


def k_grid(n_cells: int) -> np.ndarray:
    """k_j = 2πj/N, j = 0..N-1"""
    return 2 * np.pi * np.arange(n_cells) / n_cells


def bloch_matrices(params: ModelParams, ks: np.ndarray) -> np.ndarray:
    """
    批量构造 Bloch 哈密顿量

    Args:
        params: 模型参数
        ks: 动量数组

    Returns:
        形状 (K, 2, 2) 的复数组
    """
    ks = np.mod(np.asarray(ks, dtype=float), 2 * np.pi)
    h = np.zeros(ks.shape + (2, 2), dtype=complex)
    h[..., 0, 0] = -1j * params.gamma
    h[..., 1, 1] = 1j * params.gamma
    h[..., 0, 1] = -(params.t1 + params.t2 * np.exp(-1j * ks))
    h[..., 1, 0] = -(params.t1 + params.t2 * np.exp(1j * ks))
    return h


def bloch_hamiltonian(params: ModelParams, k: float) -> BlochHamiltonian:
    if not np.isfinite(k):
        raise ParameterError(f"动量必须有限: k={k}")
    k = float(np.mod(k, 2 * np.pi))
    return BlochHamiltonian(k=k, matrix=bloch_matrices(params, np.array(k)))


def open_hamiltonian(params: ModelParams) -> OpenChainHamiltonian:
    """构造 2N×2N 开链哈密顿量"""
    if params.boundary is not Boundary.OBC:
        raise ParameterError("open_hamiltonian 需要 OBC 边界条件")
    n = params.n_cells
    if n < 2:
        raise ParameterError(f"开链至少需要 2 个元胞: n_cells={n}")

    size = 2 * n
    h = np.zeros((size, size), dtype=complex)
    h[np.arange(0, size, 2), np.arange(0, size, 2)] = -1j * params.gamma
    h[np.arange(1, size, 2), np.arange(1, size, 2)] = 1j * params.gamma

    a_sites = np.arange(0, size, 2)
    h[a_sites, a_sites + 1] = -params.t1
    h[a_sites + 1, a_sites] = -params.t1

    b_sites = np.arange(1, size - 1, 2)
    h[b_sites, b_sites + 1] = -params.t2
    h[b_sites + 1, b_sites] = -params.t2

    return OpenChainHamiltonian(n_cells=n, matrix=h)


def dispersion_squared(params: ModelParams, k) -> Union[float, np.ndarray]:
    """ε(k)² = -γ² + t1² + t2² + 2 t1 t2 cos k（实数）"""
    return (-params.gamma ** 2 + params.t1 ** 2 + params.t2 ** 2
            + 2 * params.t1 * params.t2 * np.cos(k))


def dispersion(params: ModelParams, k, band: Band = Band.PLUS):
    """
    解析色散关系

    主值平方根: Plus 取 Re ≥ 0 的根，纯虚时取 Im ≥ 0 的根；Minus 为其相反数。
    """
    disc = np.asarray(dispersion_squared(params, k), dtype=float)
    # 实数转复数时虚部为 +0.0，保证负实轴上取 +i 分支
    root = np.sqrt(disc.astype(complex))
    value = root if Band(band) is Band.PLUS else -root
    if value.ndim == 0:
        return complex(value)
    return value


def classify_phase(params: ModelParams) -> PhaseLabel:
    """按 γ 与 |t2 - t1|、t1 + t2 的关系划分 PT 相"""
    lower = abs(params.t2 - params.t1)
    upper = params.t1 + params.t2
    gamma = params.gamma

    if abs(gamma - upper) <= PHASE_TOL:
        # 虚线隙恰好闭合：谱全虚且无隙
        return PhaseLabel.FULLY_IMAGINARY
    if abs(gamma - lower) <= PHASE_TOL:
        return PhaseLabel.GAPLESS
    if gamma < lower:
        return PhaseLabel.REAL_LINE_GAP
    if gamma < upper:
        return PhaseLabel.MIXED_BROKEN
    return PhaseLabel.IMAGINARY_LINE_GAP


def spectrum(params: ModelParams) -> np.ndarray:
    """
    完整单粒子谱

    PBC: k 网格上两条能带 (2N 个值)；OBC: 开链哈密顿量的全部本征值
    """
    if params.boundary is Boundary.PBC:
        ks = k_grid(params.n_cells)
        plus = dispersion(params, ks, Band.PLUS)
        return np.concatenate([-plus, plus])
    return scipy.linalg.eigvals(open_hamiltonian(params).matrix)


def spectrum_sweep(params: ModelParams, gammas) -> Dict[str, np.ndarray]:
    """
    γ 扫描下的 PBC 能带 (用于能谱图数据)

    Returns:
        包含 gamma, k, band, energy 的扁平数组字典
    """
    ks = k_grid(params.n_cells)
    rows_gamma, rows_k, rows_band, rows_energy = [], [], [], []
    for gamma in np.asarray(gammas, dtype=float):
        point = params.with_changes(gamma=float(gamma))
        for band in (Band.MINUS, Band.PLUS):
            rows_gamma.append(np.full(ks.shape, gamma))
            rows_k.append(ks)
            rows_band.append(np.full(ks.shape, band.value))
            rows_energy.append(dispersion(point, ks, band))
    logger.debug(f"能谱扫描完成: {len(rows_gamma) // 2} 个 gamma 点")
    return {
        "gamma": np.concatenate(rows_gamma),
        "k": np.concatenate(rows_k),
        "band": np.concatenate(rows_band),
        "energy": np.concatenate(rows_energy),
    }
