"""
工具函数模块
包含数据导出、并行映射、文件名与时间格式化等辅助功能
"""

import os
import re
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from config import get_max_workers

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def format_time(seconds: float) -> str:
    """
    将秒数格式化为时间字符串

    Args:
        seconds: 秒数

    Returns:
        格式化的时间字符串 (HH:MM:SS.s)
    """
    hours = int(seconds // 3600)
    minutes = int((seconds % 3600) // 60)
    secs = seconds % 60
    return f"{hours:02d}:{minutes:02d}:{secs:04.1f}"


def create_safe_filename(filename: str) -> str:
    """
    创建安全的文件名（移除特殊字符）

    Args:
        filename: 原始文件名

    Returns:
        安全的文件名
    """
    safe_name = re.sub(r'[<>:"/\\|?*\s]', '_', filename)
    safe_name = re.sub(r'_+', '_', safe_name)  # 合并多个下划线
    return safe_name.strip('_')


def to_jsonable(value):
    """把 numpy 标量/数组和复数转换为 JSON 可序列化对象"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "value") and hasattr(value, "name"):
        return value.value
    return value


def export_to_json(data: Dict, output_path: str) -> bool:
    """
    导出数据到JSON文件

    Args:
        data: 要导出的数据
        output_path: 输出文件路径

    Returns:
        是否成功
    """
    try:
        with open(output_path, 'w', encoding='utf-8') as f:
            json.dump(to_jsonable(data), f, ensure_ascii=False, indent=2)
        return True
    except (OSError, TypeError, ValueError) as e:
        logger.error(f"JSON导出失败: {e}")
        return False


def load_from_json(file_path: str) -> Optional[Dict]:
    """
    从JSON文件加载数据

    Args:
        file_path: JSON文件路径

    Returns:
        加载的数据或None
    """
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        logger.error(f"JSON加载失败: {e}")
        return None


def write_csv(output_path: str, columns: Sequence[str], rows: np.ndarray,
              metadata: Optional[Dict] = None, fmt="%.17g") -> str:
    """
    写入带 JSON 元数据头的 CSV

    第一行为 "# " + 单行 JSON 元数据（可选），第二行为列名，之后每行一条记录。
    """
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] != len(columns):
        raise ValueError(f"列数不匹配: {rows.shape} vs {len(columns)} 列")
    os.makedirs(os.path.dirname(os.path.abspath(output_path)), exist_ok=True)
    with open(output_path, 'w', encoding='utf-8') as f:
        if metadata is not None:
            f.write("# " + json.dumps(to_jsonable(metadata), ensure_ascii=False) + "\n")
        f.write(",".join(columns) + "\n")
        np.savetxt(f, rows, delimiter=",", fmt=fmt)
    logger.debug(f"CSV 已写入: {output_path} ({rows.shape[0]} 行)")
    return output_path


def read_csv_metadata(file_path: str) -> Optional[Dict]:
    """读取 write_csv 写入的元数据头"""
    with open(file_path, 'r', encoding='utf-8') as f:
        first = f.readline()
    if not first.startswith("# "):
        return None
    return json.loads(first[2:])


def parallel_map(func: Callable[[T], R], items: Iterable[T],
                 max_workers: Optional[int] = None) -> List[R]:
    """
    保序的线程池映射

    Args:
        func: 作用于每个元素的函数
        items: 输入序列
        max_workers: 最大线程数（默认读取 ITC_THREADS）

    Returns:
        与输入顺序一致的结果列表；任一任务的异常会原样抛出
    """
    items = list(items)
    if not items:
        return []
    workers = min(max_workers or get_max_workers(), len(items))
    if workers == 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(func, item) for item in items]
        return [future.result() for future in futures]
