"""
运行配置模块
环境变量、RunConfig 以及对应各图数据的命名预设
"""

import os
import logging
from dataclasses import dataclass, field, asdict, replace
from typing import Dict, Any, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv

from errors import ParameterError
from model import ModelParams

# 加载环境变量
load_dotenv()

logger = logging.getLogger(__name__)

SUBCOMMANDS = (
    "spectrum", "phase", "greens-matsubara", "greens-tau", "greens-obc",
    "greens-realtime", "resonances", "thermo",
)
FORMATS = ("csv", "json")
DEFAULT_THREADS = 8


def get_max_workers() -> int:
    """读取 ITC_THREADS，缺省为 min(8, CPU 核数)"""
    raw = os.getenv("ITC_THREADS")
    if not raw:
        workers = max(1, min(DEFAULT_THREADS, os.cpu_count() or 1))
        logger.debug(f"ITC_THREADS 未设置，使用 {workers} 个线程")
        return workers
    try:
        value = int(raw)
    except ValueError:
        raise ParameterError(f"ITC_THREADS 必须是整数: {raw!r}")
    if value < 1:
        raise ParameterError(f"ITC_THREADS 必须 ≥ 1: {value}")
    return value


@dataclass(frozen=True)
class RunConfig:
    """
    一次命令行运行的完整配置

    网格字段的默认值对应默认 PBC 网格 (N=200)；gamma_sweep 为 (起点, 终点, 步长)，
    thermo 在 [beta_min, beta_max] 上取 n_beta 个对数间隔点。
    """
    subcommand: str = "spectrum"
    params: ModelParams = field(default_factory=ModelParams)
    name: str = "run"
    n_max: int = 10_000
    n_tau: int = 512
    n_modes: int = 16
    gamma_sweep: Optional[Tuple[float, float, float]] = None
    beta_min: float = 0.05
    beta_max: float = 8.0
    n_beta: int = 400
    t_max: float = 100.0
    n_t: int = 1001
    r: int = 0
    component: Tuple[int, int] = (0, 0)
    output: str = "output"
    format: str = "csv"

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ParameterError(f"未知子命令: {self.subcommand}")
        if self.format not in FORMATS:
            raise ParameterError(f"未知输出格式: {self.format}")
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", ModelParams.from_dict(self.params))
        if self.gamma_sweep is not None:
            sweep = tuple(float(v) for v in self.gamma_sweep)
            if len(sweep) != 3 or sweep[2] <= 0 or sweep[1] < sweep[0]:
                raise ParameterError(f"gamma_sweep 需要 (start, stop, step) 且 step > 0: {self.gamma_sweep}")
            object.__setattr__(self, "gamma_sweep", sweep)
        object.__setattr__(self, "component", tuple(int(c) for c in self.component))
        if self.n_max < 1 or self.n_tau < 2 or self.n_modes < 1 or self.n_beta < 2 or self.n_t < 2:
            raise ParameterError("网格大小必须为正 (n_tau, n_beta, n_t ≥ 2)")
        if not 0 < self.beta_min < self.beta_max:
            raise ParameterError(f"需要 0 < beta_min < beta_max: {self.beta_min}, {self.beta_max}")
        if self.t_max <= 0:
            raise ParameterError(f"t_max 必须为正: {self.t_max}")
        if any(c not in (0, 1) for c in self.component):
            raise ParameterError(f"子晶格分量必须为 0 或 1: {self.component}")

    def with_changes(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def beta_grid(self) -> np.ndarray:
        return np.geomspace(self.beta_min, self.beta_max, self.n_beta)

    def gamma_values(self) -> np.ndarray:
        if self.gamma_sweep is None:
            return np.array([self.params.gamma])
        start, stop, step = self.gamma_sweep
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(count)

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_t)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["params"] = self.params.to_dict()
        data["component"] = list(self.component)
        if self.gamma_sweep is not None:
            data["gamma_sweep"] = list(self.gamma_sweep)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        data = dict(data)
        data["params"] = ModelParams.from_dict(data.get("params", {}))
        if data.get("gamma_sweep") is not None:
            data["gamma_sweep"] = tuple(data["gamma_sweep"])
        if "component" in data:
            data["component"] = tuple(data["component"])
        return cls(**data)


# 预设：名称 -> (说明, 子命令, ModelParams 参数, RunConfig 其余字段)
_PRESET_TABLE: Dict[str, Tuple[str, str, Dict[str, Any], Dict[str, Any]]] = {
    "fig1b": ("γ 扫描下的 PBC 能带 (t2=2)", "spectrum",
        dict(t2=2.0), dict(gamma_sweep=(0.0, 4.0, 0.05))),
    "fig2": ("共振模式与 G(r,τ)，γ=3, t2=2, β=2π", "greens-tau",
        dict(t2=2.0, gamma=3.0, beta=2 * np.pi), {}),
    "fig3-row1": ("β=4π, γ=1", "greens-tau", dict(t2=2.0, gamma=1.0, beta=4 * np.pi), {}),
    "fig3-row2": ("β=4π, γ=2", "greens-tau", dict(t2=2.0, gamma=2.0, beta=4 * np.pi), {}),
    "fig3-row3": ("β=4π, γ=3", "greens-tau", dict(t2=2.0, gamma=3.0, beta=4 * np.pi), {}),
    "fig3-row4": ("β=4π, γ=4", "greens-tau", dict(t2=2.0, gamma=4.0, beta=4 * np.pi), {}),
    "fig4-trivial": ("OBC 平庸相 t2=0.5, γ=1, β=3π", "greens-obc",
        dict(t2=0.5, gamma=1.0, beta=3 * np.pi, n_cells=40, boundary="obc"), {}),
    "fig4-topo": ("OBC 拓扑相 t2=2, γ=1, β=3π", "greens-obc",
        dict(t2=2.0, gamma=1.0, beta=3 * np.pi, n_cells=40, boundary="obc"), {}),
    "fig5": ("实时间 G(t)，γ=3.028, β=4, 玻色子", "greens-realtime",
        dict(t2=2.0, gamma=3.028, beta=4.0, statistics="boson"), dict(r=20)),
    "fig6-col1": ("热力学 β 扫描 γ=0", "thermo", dict(t2=2.0, gamma=0.0, mu_offset=1e-3), {}),
    "fig6-col2": ("热力学 β 扫描 γ=1.5", "thermo", dict(t2=2.0, gamma=1.5, mu_offset=1e-3), {}),
    "fig6-col3": ("热力学 β 扫描 γ=3.5", "thermo", dict(t2=2.0, gamma=3.5, mu_offset=1e-3), {}),
}

# 描述性别名 -> 预设名
_PRESET_ALIASES: Dict[str, str] = {
    "bands-sweep": "fig1b",
    "resonant-tau": "fig2",
    "beta4pi-g1": "fig3-row1",
    "beta4pi-g2": "fig3-row2",
    "beta4pi-g3": "fig3-row3",
    "beta4pi-g4": "fig3-row4",
    "obc-trivial": "fig4-trivial",
    "obc-topo": "fig4-topo",
    "realtime-growth": "fig5",
    "thermo-g0": "fig6-col1",
    "thermo-g1.5": "fig6-col2",
    "thermo-g3.5": "fig6-col3",
}


def get_preset(name: str, **param_overrides) -> RunConfig:
    """按名称（或描述性别名）构造预设 RunConfig，可覆盖模型参数"""
    name = _PRESET_ALIASES.get(name, name)
    if name not in _PRESET_TABLE:
        raise ParameterError(f"未知预设: {name}（可选: {', '.join(_PRESET_TABLE)}）")
    _, subcommand, model_fields, run_fields = _PRESET_TABLE[name]
    params = ModelParams(**{**model_fields, **param_overrides})
    return RunConfig(subcommand=subcommand, params=params, name=name, **run_fields)


def list_presets() -> List[Dict[str, Any]]:
    """预设表：每行包含名称、别名、说明、子命令和模型参数"""
    aliases = {target: alias for alias, target in _PRESET_ALIASES.items()}
    rows = []
    for name, (description, subcommand, _, _) in _PRESET_TABLE.items():
        config = get_preset(name)
        rows.append({
            "name": name,
            "alias": aliases.get(name, ""),
            "description": description,
            "subcommand": subcommand,
            "params": config.params.to_dict(),
        })
    return rows
