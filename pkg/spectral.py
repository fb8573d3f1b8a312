"""
双正交本征分解
非厄米哈密顿量的左右本征矢量、归一化、投影算符以及边缘态识别
"""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.linalg

from errors import NearDefectiveError, PairingError, ParameterError
from model import ModelParams, Band, bloch_hamiltonian, bloch_matrices, dispersion, dispersion_squared

logger = logging.getLogger(__name__)

PAIR_TOL = 1e-6
DEFECT_TOL = 1e-10
EP_TOL = 1e-8
# 近简并簇内的特征值差小于该量级时视为严格简并
DEGENERATE_SPREAD = 1e-12


def _freeze(array: np.ndarray) -> np.ndarray:
    array = np.array(array)
    array.setflags(write=False)
    return array


def _sort_order(eigenvalues: np.ndarray) -> np.ndarray:
    """按 (Re, Im) 字典序排序；实部先取 9 位小数，避免 ±1e-17 打乱顺序"""
    return np.lexsort((eigenvalues.imag, np.round(eigenvalues.real, 9)))


@dataclass(frozen=True)
class BiorthogonalSystem:
    """
    双正交本征系统

    right_vectors / left_vectors 的第 m 列分别为 φ_m^R / φ_m^L，
    满足 φ_m^{L†} φ_n^R = δ_mn。condition 为归一化前的 |φ_L† φ_R|（单位矢量）。
    """
    eigenvalues: np.ndarray
    right_vectors: np.ndarray = field(repr=False)
    left_vectors: np.ndarray = field(repr=False)
    condition: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("eigenvalues", "right_vectors", "left_vectors", "condition"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def projector(self, m: int) -> np.ndarray:
        return np.outer(self.right_vectors[:, m], self.left_vectors[:, m].conj())

    def projectors(self) -> np.ndarray:
        """形状 (M, n, n) 的全部投影算符 φ_R φ_L†"""
        return np.einsum("am,bm->mab", self.right_vectors, self.left_vectors.conj())

    def resolution_of_identity(self) -> np.ndarray:
        return self.right_vectors @ self.left_vectors.conj().T

    def reconstruct(self) -> np.ndarray:
        return (self.right_vectors * self.eigenvalues) @ self.left_vectors.conj().T


@dataclass(frozen=True)
class EdgeStateReport:
    indices: Tuple[int, ...]
    energies: np.ndarray
    localization: np.ndarray

    @property
    def count(self) -> int:
        return len(self.indices)


def _unit_columns(vectors: np.ndarray) -> np.ndarray:
    return vectors / np.linalg.norm(vectors, axis=0)


def _null_basis(matrix: np.ndarray, size: int, threshold: float) -> np.ndarray:
    """返回 matrix 零空间的正交基（最小的 size 个奇异矢量）"""
    _, singular, vh = scipy.linalg.svd(matrix)
    nullity = int(np.count_nonzero(singular < threshold))
    if nullity < size:
        raise NearDefectiveError(
            f"本征矢量重合: 簇大小 {size}，零空间维数 {nullity}（接近奇异点）")
    if nullity > size:
        raise PairingError(f"简并簇大小 {size} 与零空间维数 {nullity} 不一致")
    return vh[-size:].conj().T


def _cluster_basis(h: np.ndarray, cluster_eigs: np.ndarray, tol: float, scale: float):
    """
    近简并簇: 用 SVD 零空间构造左右基，再在簇内对角化

    Returns:
        (右矢, 未归一化左矢, 簇内本征值)
    """
    size = len(cluster_eigs)
    center = cluster_eigs.mean()
    identity = np.eye(h.shape[0])
    right0 = _null_basis(h - center * identity, size, 10 * tol)
    left0 = _null_basis(h.conj().T - np.conj(center) * identity, size, 10 * tol)

    overlap = left0.conj().T @ right0
    if scipy.linalg.svdvals(overlap).min() < DEFECT_TOL:
        raise NearDefectiveError("简并簇的左右基几乎正交（接近奇异点）")
    reduced = np.linalg.solve(overlap, left0.conj().T @ h @ right0)

    mean = np.trace(reduced) / size
    if np.linalg.norm(reduced - mean * np.eye(size)) < DEGENERATE_SPREAD * scale:
        return right0, left0, np.full(size, mean)

    values, vectors = scipy.linalg.eig(reduced)
    return _unit_columns(right0 @ vectors), left0, values


def decompose(H, pair_tol: float = PAIR_TOL, defect_tol: float = DEFECT_TOL) -> BiorthogonalSystem:
    """
    稠密矩阵的双正交分解

    右矢来自 H 的本征矢量，左矢来自 H† 的本征矢量，按共轭本征值最近匹配配对；
    归一化 φ_L† φ_R = 1 的全部缩放放在左矢上，右矢保持单位长度。

    Args:
        H: 复方阵
        pair_tol: 配对容差（相对 max(1, max|H_ij|)）
        defect_tol: |φ_L† φ_R| 的下限

    Returns:
        BiorthogonalSystem
    """
    h = np.asarray(H, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ParameterError(f"需要方阵，实际形状 {h.shape}")
    if not pair_tol > 0:
        raise ParameterError(f"pair_tol 必须为正: {pair_tol}")
    n = h.shape[0]
    scale = max(1.0, float(np.abs(h).max()))
    tol = pair_tol * scale

    values, right_raw = scipy.linalg.eig(h)
    adjoint_values, left_raw = scipy.linalg.eig(h.conj().T)
    order = _sort_order(values)
    values = values[order]
    right_raw = _unit_columns(right_raw[:, order])
    left_raw = _unit_columns(left_raw)
    targets = adjoint_values.conj()

    eigenvalues = values.copy()
    right = np.empty_like(right_raw)
    left = np.empty_like(right_raw)
    condition = np.empty(n)
    assigned = np.zeros(n, dtype=bool)
    used = np.zeros(n, dtype=bool)

    for m in range(n):
        if assigned[m]:
            continue
        members = np.flatnonzero(~assigned & (np.abs(values - values[m]) < tol))
        partners = np.flatnonzero(~used & (np.abs(targets - values[m]) < tol))
        if len(partners) != len(members):
            raise PairingError(
                f"本征值 {values[m]:.6g} 在 H 中出现 {len(members)} 次，"
                f"在 H† 中匹配到 {len(partners)} 次")
        assigned[members] = True
        used[partners] = True

        if len(members) == 1:
            block_right = right_raw[:, members]
            block_left = left_raw[:, partners]
            block_values = values[members]
        else:
            logger.debug(f"处理 {len(members)} 重简并簇: ε ≈ {values[m]:.6g}")
            block_right, block_left, block_values = _cluster_basis(h, values[members], tol, scale)

        overlap = block_left.conj().T @ block_right
        conditioning = float(scipy.linalg.svdvals(overlap).min())
        if conditioning < defect_tol:
            raise NearDefectiveError(
                f"|φ_L† φ_R| = {conditioning:.3e} < {defect_tol:g}，ε ≈ {values[m]:.6g}（接近奇异点）")

        right[:, members] = block_right
        left[:, members] = block_left @ np.linalg.inv(overlap).conj().T
        eigenvalues[members] = block_values
        condition[members] = conditioning

    order = _sort_order(eigenvalues)
    return BiorthogonalSystem(
        eigenvalues=eigenvalues[order],
        right_vectors=right[:, order],
        left_vectors=left[:, order],
        condition=condition[order],
    )


def _larger(first, second) -> np.ndarray:
    first = np.asarray(first, dtype=complex)
    second = np.asarray(second, dtype=complex)
    return first if np.linalg.norm(first) >= np.linalg.norm(second) else second


def decompose_bloch(params: ModelParams, k: float, ep_tol: float = EP_TOL,
                    defect_tol: float = DEFECT_TOL) -> BiorthogonalSystem:
    """2×2 Bloch 哈密顿量的解析双正交分解"""
    bloch = bloch_hamiltonian(params, k)
    h = bloch.matrix
    disc = float(dispersion_squared(params, bloch.k))
    if abs(disc) < ep_tol:
        raise NearDefectiveError(
            f"k={bloch.k:.6g} 距奇异点过近: |ε(k)|² = {abs(disc):.3e} ({params.describe()})")

    energy = dispersion(params, bloch.k, Band.PLUS)
    eigenvalues = np.array([-energy, energy])
    right = np.empty((2, 2), dtype=complex)
    left = np.empty((2, 2), dtype=complex)
    condition = np.empty(2)

    for index, eps in enumerate(eigenvalues):
        r = _larger([h[0, 1], eps - h[0, 0]], [eps - h[1, 1], h[1, 0]])
        # 行左矢 w 满足 w H = ε w
        w = _larger([h[1, 0], eps - h[0, 0]], [eps - h[1, 1], h[0, 1]])
        r = r / np.linalg.norm(r)
        w = w / np.linalg.norm(w)
        overlap = w @ r
        if abs(overlap) < defect_tol:
            raise NearDefectiveError(
                f"k={bloch.k:.6g}: |φ_L† φ_R| = {abs(overlap):.3e}（接近奇异点）")
        right[:, index] = r
        left[:, index] = np.conj(w / overlap)
        condition[index] = abs(overlap)

    order = _sort_order(eigenvalues)
    return BiorthogonalSystem(eigenvalues[order], right[:, order], left[:, order], condition[order])


def bloch_projectors(params: ModelParams, ks, ep_tol: float = EP_TOL):
    """
    批量解析投影算符 P± = (H ± ε)/(±2ε)（顺序 [Minus, Plus]）

    Returns:
        eigenvalues (K, 2), projectors (K, 2, 2, 2), valid (K,)；valid 为 False 的 k 点距奇异点过近，
        其投影算符置零
    """
    ks = np.mod(np.asarray(ks, dtype=float), 2 * np.pi)
    h = bloch_matrices(params, ks)
    energy = dispersion(params, ks, Band.PLUS)
    valid = np.abs(dispersion_squared(params, ks)) >= ep_tol
    safe = np.where(valid, energy, 1.0)[:, None, None]

    identity = np.eye(2)
    plus = (h + safe * identity) / (2 * safe)
    minus = (safe * identity - h) / (2 * safe)
    projectors = np.stack([minus, plus], axis=1)
    projectors[~valid] = 0.0

    eigenvalues = np.stack([-energy, energy], axis=1)
    return eigenvalues, projectors, valid


def inverse_participation_ratio(vectors: np.ndarray) -> np.ndarray:
    """每列的 IPR = Σ|ψ|⁴ / (Σ|ψ|²)²"""
    weights = np.abs(vectors) ** 2
    return (weights ** 2).sum(axis=0) / weights.sum(axis=0) ** 2


def detect_edge_states(system: BiorthogonalSystem, tol_edge: float = 1e-4,
                       ipr_threshold: float = 0.1) -> EdgeStateReport:
    """标记 |Re ε| < tol_edge 且 IPR > ipr_threshold 的模式"""
    ipr = inverse_participation_ratio(system.right_vectors)
    mask = (np.abs(system.eigenvalues.real) < tol_edge) & (ipr > ipr_threshold)
    indices = tuple(int(i) for i in np.flatnonzero(mask))
    logger.info(f"识别到 {len(indices)} 个边缘态")
    return EdgeStateReport(
        indices=indices,
        energies=_freeze(system.eigenvalues[list(indices)]),
        localization=_freeze(ipr[list(indices)]),
    )
