"""
异常定义模块
所有数值模块共享的异常层级
"""


class ITCError(Exception):
    """iTCFlow 基础异常"""


class ParameterError(ITCError, ValueError):
    """参数校验失败（命令行退出码 2）"""


class NumericalError(ITCError):
    """数值计算失败（命令行退出码 3）"""


class NearDefectiveError(NumericalError):
    """接近奇异点：左右本征矢量重合，无法双正交归一化"""


class PairingError(NumericalError):
    """H 与 H† 的本征值无法一一配对"""


class SingularInverseError(NumericalError):
    """(-iω_n - μ + H) 不可逆"""


class DistributionPoleError(NumericalError):
    """Bose-Einstein / Fermi-Dirac 分布恰好落在极点上"""


class BoseConvergenceError(NumericalError):
    """玻色子要求 Re(ε - μ) > 0"""


class ConvergenceWarning(UserWarning):
    """两条虚时路径的差异超过截断误差估计"""
