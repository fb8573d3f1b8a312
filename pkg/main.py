#!/usr/bin/env python3
"""
iTCFlow - 非厄米增益/损耗 SSH 链的有限温度数值工具
支持能谱与相图、Matsubara/虚时间/实时间格林函数、共振模式搜索和热力学 β 扫描
"""

import argparse
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np

from config import RunConfig, SUBCOMMANDS, get_preset, list_presets
from errors import NumericalError, ParameterError
from greens import (distribution_on_spectrum, distribution_plane, dominant_modes,
                    find_resonances, greens_imag_time, greens_imag_time_obc,
                    greens_matsubara_map, greens_real_time, growth_rates, resonant_modes)
from model import Boundary, ModelParams, PhaseLabel, classify_phase, spectrum, spectrum_sweep
from thermo import SWEEP_MU_OFFSET, beta_oscillation_peaks, thermo_sweep
from utils import create_safe_filename, export_to_json, format_time, write_csv

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

__version__ = "1.0.0"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARAMETER = 2
EXIT_NUMERICAL = 3

PARAM_FLAGS = ("t1", "t2", "gamma", "n_cells", "boundary", "statistics", "beta", "mu_offset")


def parse_gamma_sweep(text: str):
    """解析 start:stop:step"""
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise ParameterError(f"--gamma-sweep 格式应为 start:stop:step: {text!r}")
    return start, stop, step


def setup_argument_parser():
    """设置命令行参数解析器"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", help="使用命名预设（见 presets 子命令）")
    common.add_argument("--t1", type=float, help="胞内跃迁 t1（默认 1）")
    common.add_argument("--t2", type=float, help="胞间跃迁 t2（默认 2）")
    common.add_argument("--gamma", type=float, help="增益/损耗强度 γ（默认 0）")
    common.add_argument("--n-cells", dest="n_cells", type=int, help="元胞数 N（默认 200）")
    common.add_argument("--boundary", choices=["pbc", "obc"], help="边界条件（默认 pbc）")
    common.add_argument("--stat", dest="statistics", choices=["boson", "fermion"],
                        help="统计（默认 fermion）")
    common.add_argument("--beta", type=float, help="逆温度 β（默认 2π）")
    common.add_argument("--mu-offset", dest="mu_offset", type=float, help="化学势偏移（默认 1e-5，thermo 默认 1e-3）")
    common.add_argument("--n-max", dest="n_max", type=int, help="Matsubara 截断 n_max（默认 10000）")
    common.add_argument("--n-tau", dest="n_tau", type=int, help="τ 网格点数 M（默认 512）")
    common.add_argument("--n-modes", dest="n_modes", type=int, help="greens-matsubara 的 |n| 上限（默认 16）")
    common.add_argument("--gamma-sweep", dest="gamma_sweep", help="γ 扫描 start:stop:step")
    common.add_argument("--beta-min", dest="beta_min", type=float, help="thermo β 网格下限")
    common.add_argument("--beta-max", dest="beta_max", type=float, help="thermo β 网格上限")
    common.add_argument("--n-beta", dest="n_beta", type=int, help="thermo β 点数")
    common.add_argument("--t-max", dest="t_max", type=float, help="实时间上限")
    common.add_argument("--n-t", dest="n_t", type=int, help="实时间点数")
    common.add_argument("-r", dest="r", type=int, help="实时间斜率分析所用的距离 r")
    common.add_argument("-o", "--output", help="输出目录（默认 output/）")
    common.add_argument("--format", choices=["csv", "json"], help="输出格式（默认 csv）")
    common.add_argument("--verbose", "-v", action="store_true", help="显示详细输出")

    parser = argparse.ArgumentParser(
        description="iTCFlow - 非厄米 SSH 链的虚时间晶体数值工具",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用示例:
  python main.py spectrum --t2 2 --gamma-sweep 0:4:0.05           # 能带随 γ 变化
  python main.py greens-tau --gamma 3 --t2 2 --beta 6.2832        # 虚时间格林函数
  python main.py greens-obc --preset fig4-topo                   # 开链边缘态共振
  python main.py thermo --t2 2 --gamma 0 --stat boson             # 热力学 β 扫描
  python main.py presets                                          # 列出预设
        """
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        subparsers.add_parser(name, parents=[common], help=f"{name} 数据")
    subparsers.add_parser("presets", help="列出命名预设")
    return parser


def build_config(args) -> RunConfig:
    """命令行参数 → RunConfig（预设优先，显式参数覆盖）"""
    overrides = {flag: getattr(args, flag) for flag in PARAM_FLAGS if getattr(args, flag) is not None}
    if args.command == "thermo" and args.mu_offset is None:
        overrides["mu_offset"] = SWEEP_MU_OFFSET
    if args.preset:
        config = get_preset(args.preset, **overrides).with_changes(subcommand=args.command)
    else:
        config = RunConfig(subcommand=args.command, params=ModelParams(**overrides))

    changes: Dict[str, Any] = {}
    for flag in ("n_max", "n_tau", "n_modes", "beta_min", "beta_max", "n_beta", "t_max", "n_t",
                 "r", "output", "format"):
        value = getattr(args, flag)
        if value is not None:
            changes[flag] = value
    if args.gamma_sweep:
        changes["gamma_sweep"] = parse_gamma_sweep(args.gamma_sweep)
    return config.with_changes(**changes) if changes else config


def _output_path(config: RunConfig, suffix: str, extension: Optional[str] = None) -> str:
    filename = create_safe_filename(f"{config.name}_{suffix}.{extension or config.format}")
    return os.path.join(config.output, filename)


def _export_table(config: RunConfig, suffix: str, columns, rows, metadata: Dict, fmt="%.17g") -> str:
    path = _output_path(config, suffix)
    if config.format == "json":
        payload = dict(metadata)
        payload["columns"] = list(columns)
        payload["rows"] = np.asarray(rows).tolist()
        if not export_to_json(payload, path):
            raise OSError(f"无法写入 {path}")
        return path
    return write_csv(path, columns, rows, metadata=metadata, fmt=fmt)


def _export_tensor(config: RunConfig, tensor, suffix: str) -> str:
    path = _output_path(config, suffix)
    return tensor.to_json(path) if config.format == "json" else tensor.to_csv(path)


def run_spectrum(config: RunConfig, diagnostics: Dict) -> List[str]:
    params = config.params
    gammas = config.gamma_values()
    if params.boundary is Boundary.PBC:
        sweep = spectrum_sweep(params, gammas)
        band = np.where(sweep["band"] == "plus", 1, -1)
        rows = np.column_stack([sweep["gamma"], sweep["k"], band,
                                sweep["energy"].real, sweep["energy"].imag])
        columns = ("gamma", "k", "band", "re", "im")
    else:
        blocks = []
        for gamma in gammas:
            energies = np.sort_complex(spectrum(params.with_changes(gamma=float(gamma))))
            blocks.append(np.column_stack([np.full(len(energies), gamma), np.arange(len(energies)),
                                           energies.real, energies.imag]))
        rows = np.vstack(blocks)
        columns = ("gamma", "index", "re", "im")
    diagnostics["gamma_points"] = len(gammas)
    return [_export_table(config, "spectrum", columns, rows, {"params": params.to_dict()})]


def run_phase(config: RunConfig, diagnostics: Dict) -> List[str]:
    params = config.params
    gammas = config.gamma_values()
    rows = np.array([[f"{gamma:.12g}", classify_phase(params.with_changes(gamma=float(gamma))).value]
                     for gamma in gammas], dtype=object)
    labels = sorted(set(rows[:, 1]))
    diagnostics["phases"] = labels
    diagnostics["gapless_gamma"] = [float(g) for g, label in zip(gammas, rows[:, 1])
                                    if PhaseLabel(label).is_gapless]
    print(f"🧭 相: {', '.join(labels)}")
    return [_export_table(config, "phase", ("gamma", "phase"), rows,
                          {"params": params.to_dict()}, fmt="%s")]


def run_greens_matsubara(config: RunConfig, diagnostics: Dict) -> List[str]:
    n_values = np.arange(-config.n_modes, config.n_modes + 1)
    tensor = greens_matsubara_map(config.params, n_values)
    diagnostics["max_abs"] = float(np.abs(tensor.values).max())
    return [_export_tensor(config, tensor, "greens_matsubara")]


def _oscillation_diagnostics(tensor, diagnostics: Dict, site: Optional[int] = None):
    for i, j in ((0, 0), (1, 1)):
        diagnostics[f"dominant_modes_{i + 1}{j + 1}"] = list(dominant_modes(tensor, i, j, site=site))


def run_greens_tau(config: RunConfig, diagnostics: Dict) -> List[str]:
    params = config.params
    tensor = greens_imag_time(params, config.n_max, config.n_tau)
    diagnostics.update(tensor.diagnostics)
    diagnostics["skipped_k"] = list(tensor.skipped_k)
    if params.boundary is Boundary.PBC:
        diagnostics["resonances"] = list(find_resonances(params).n_modes)
        diagnostics["resonant_modes"] = list(resonant_modes(tensor))
    else:
        _oscillation_diagnostics(tensor, diagnostics)
    return [_export_tensor(config, tensor, "greens_tau")]


def run_greens_obc(config: RunConfig, diagnostics: Dict) -> List[str]:
    params = config.params
    if params.boundary is not Boundary.OBC:
        raise ParameterError("greens-obc 需要 --boundary obc")
    tensor = greens_imag_time_obc(params, config.n_max, config.n_tau)
    diagnostics.update(tensor.diagnostics)
    diagnostics["left_edge_dominant"] = list(dominant_modes(tensor, 0, 0, site=0))
    diagnostics["right_edge_dominant"] = list(dominant_modes(tensor, 1, 1, site=params.n_cells - 1))
    return [_export_tensor(config, tensor, "greens_obc")]


def run_greens_realtime(config: RunConfig, diagnostics: Dict) -> List[str]:
    params = config.params
    times = config.time_grid()
    tensor = greens_real_time(params, times)
    i, j = config.component
    series = tensor.values[i, j, config.r % params.n_cells]
    try:
        diagnostics["growth_rates"] = growth_rates(times, series)
    except ParameterError as e:
        logger.warning(f"斜率拟合跳过: {e}")
    diagnostics["skipped_k"] = list(tensor.skipped_k)
    return [_export_tensor(config, tensor, "greens_realtime")] + _export_distribution(config, diagnostics)


def _export_distribution(config: RunConfig, diagnostics: Dict) -> List[str]:
    """|F(a)| 的复平面网格与各本征值处的 |F(ε − μ)|"""
    params = config.params
    re, im, magnitude = distribution_plane(params.beta, params.statistics)
    plane = np.column_stack([re.ravel(), im.ravel(), magnitude.ravel()])
    on_spectrum = distribution_on_spectrum(params)
    diagnostics["max_distribution_on_spectrum"] = float(on_spectrum[:, 4].max())
    metadata = {"params": params.to_dict(), "argument": "a = ε − μ"}
    return [
        _export_table(config, "distribution_plane", ("re", "im", "abs_f"), plane, metadata),
        _export_table(config, "distribution_spectrum", ("k", "band", "re", "im", "abs_f"),
                      on_spectrum, {"params": params.to_dict()}),
    ]


def run_resonances(config: RunConfig, diagnostics: Dict) -> List[str]:
    report = find_resonances(config.params)
    diagnostics["resonances"] = list(report.n_modes)
    print(f"🎯 共振 Matsubara 模式: {list(report.n_modes)}")
    rows = np.array([[e.n_mode, e.k, e.energy.real, e.energy.imag, 1 if e.band.value == "plus" else -1]
                     for e in report.modes]).reshape(-1, 5)
    metadata = {"params": config.params.to_dict(), "mu_used": report.mu_used,
                "tol_re": report.tol_re, "tol_im": report.tol_im}
    return [_export_table(config, "resonances", ("n_mode", "k", "re", "im", "band"), rows, metadata)]


def run_thermo(config: RunConfig, diagnostics: Dict) -> List[str]:
    series = thermo_sweep(config.params, config.beta_grid(), mu_offset=None)
    diagnostics["max_im_residual"] = float(series.im_residual.max())
    diagnostics["normalization"] = series.normalization
    try:
        diagnostics["free_energy_peaks"] = beta_oscillation_peaks(series.beta_grid, series.F)[:5]
    except ParameterError as e:
        logger.warning(f"β 振荡分析跳过: {e}")
    path = _output_path(config, "thermo")
    if config.format == "json":
        payload = series.metadata()
        payload.update({"beta": series.beta_grid, "U": series.U, "F": series.F, "S": series.S,
                        "mu": series.mu, "im_residual": series.im_residual})
        if not export_to_json(payload, path):
            raise OSError(f"无法写入 {path}")
        return [path]
    return [series.to_csv(path)]


HANDLERS = {
    "spectrum": run_spectrum,
    "phase": run_phase,
    "greens-matsubara": run_greens_matsubara,
    "greens-tau": run_greens_tau,
    "greens-obc": run_greens_obc,
    "greens-realtime": run_greens_realtime,
    "resonances": run_resonances,
    "thermo": run_thermo,
}


def run(config: RunConfig) -> int:
    """
    执行一次运行并写出数据文件与 <name>_report.json

    Returns:
        退出码: 0 成功，2 参数错误，3 数值错误，1 其他错误
    """
    started = time.time()
    diagnostics: Dict[str, Any] = {}
    try:
        os.makedirs(config.output, exist_ok=True)
        logger.info(f"开始 {config.subcommand}: {config.params.describe()}")
        files = HANDLERS[config.subcommand](config, diagnostics)

        report = {
            "version": __version__,
            "config": config.to_dict(),
            "phase": classify_phase(config.params).value,
            "files": files,
            "diagnostics": diagnostics,
            "elapsed": format_time(time.time() - started),
        }
        report_path = _output_path(config, "report", "json")
        if not export_to_json(report, report_path):
            raise OSError(f"无法写入 {report_path}")

        print(f"\n✅ {config.subcommand} 完成! 用时 {report['elapsed']}")
        print(f"\n📄 生成的文件:")
        for path in files:
            print(f"  - {path}")
        print(f"  - 运行报告: {report_path}")
        return EXIT_OK

    except ParameterError as e:
        logger.error(f"参数错误: {e}")
        return EXIT_PARAMETER
    except NumericalError as e:
        logger.error(f"数值错误 ({config.params.describe()}): {e}")
        return EXIT_NUMERICAL
    except KeyboardInterrupt:
        logger.info("用户中断处理")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"处理过程中发生错误: {e}", exc_info=True)
        return EXIT_FAILURE


def print_presets():
    print("📋 可用预设:")
    for row in list_presets():
        p = row["params"]
        print(f"  {row['name']:<13} {row['alias']:<16} {row['subcommand']:<16} "
              f"t1={p['t1']:g} t2={p['t2']:g} "
              f"γ={p['gamma']:g} β={p['beta']:.6g} N={p['n_cells']} {p['boundary']} "
              f"{p['statistics']}  {row['description']}")


def main(argv=None) -> int:
    """主函数"""
    parser = setup_argument_parser()
    args = parser.parse_args(argv)

    if args.command == "presets":
        print_presets()
        return EXIT_OK

    # 设置日志级别
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        config = build_config(args)
    except ParameterError as e:
        logger.error(f"参数错误: {e}")
        return EXIT_PARAMETER
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
