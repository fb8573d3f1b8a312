#!/usr/bin/env python3
"""
iTCFlow 安装验证脚本
检查依赖安装、环境配置并运行一次小规模冒烟计算
"""

import sys
import subprocess
import os
import importlib
from pathlib import Path


def check_python_version():
    """检查Python版本"""
    print("🔍 检查Python版本...")
    version = sys.version_info
    if version.major < 3 or (version.major == 3 and version.minor < 8):
        print(f"❌ Python版本过低: {version.major}.{version.minor}")
        print("   需要Python 3.8或更高版本")
        return False
    print(f"✅ Python版本: {version.major}.{version.minor}.{version.micro}")
    return True


def check_package(package_name, display_name=None):
    """检查Python包"""
    display_name = display_name or package_name
    try:
        module = importlib.import_module(package_name)
        version = getattr(module, "__version__", "")
        print(f"✅ {display_name} {version}".rstrip())
        return True
    except ImportError:
        print(f"❌ {display_name} 未安装")
        return False


def check_python_packages():
    """检查Python依赖包"""
    print("\n🔍 检查Python依赖包...")
    packages = [
        ('numpy', 'NumPy'),
        ('scipy', 'SciPy'),
        ('dotenv', 'Python Dotenv'),
        ('pytest', 'pytest'),
    ]
    all_installed = True
    for package, display in packages:
        if not check_package(package, display):
            all_installed = False
    return all_installed


def install_packages():
    """安装依赖包"""
    print("\n📦 安装Python依赖包...")
    try:
        subprocess.run([sys.executable, '-m', 'pip', 'install', '-r', 'requirements.txt'], check=True)
        print("✅ 依赖包安装完成")
        return True
    except subprocess.CalledProcessError:
        print("❌ 依赖包安装失败")
        return False


def check_environment():
    """检查环境配置"""
    print("\n🔍 检查环境配置...")
    if os.path.exists('.env'):
        print("✅ 找到 .env 配置文件")
    else:
        print("ℹ️  未找到 .env 文件 (可选)")
        if os.path.exists('env.example'):
            print("   可以复制 env.example 为 .env 并配置")

    try:
        from config import get_max_workers
        print(f"✅ 线程数 (ITC_THREADS): {get_max_workers()}")
    except Exception as e:
        print(f"❌ ITC_THREADS 配置无效: {e}")
        return False
    return True


def create_output_directory():
    """创建输出目录"""
    print("\n📁 创建必要目录...")
    Path('output').mkdir(exist_ok=True)
    print("✅ 目录: output/")
    return True


def run_basic_test():
    """运行基础测试：色散、双正交分解、共振模式与热力学各算一次"""
    print("\n🧪 运行基础功能测试...")
    try:
        import numpy as np
        from model import ModelParams, classify_phase, dispersion
        from spectral import decompose_bloch
        from greens import find_resonances
        from thermo import thermo_sweep
    except ImportError as e:
        print(f"❌ 模块导入失败: {e}")
        return False
    print("✅ 模块导入测试通过")

    params = ModelParams(t1=1, t2=2, gamma=3, n_cells=40)
    checks = [
        ("色散 ε(π) = 2√2 i", abs(dispersion(params, np.pi) - 2j * np.sqrt(2)) < 1e-12),
        ("相分类 fully_imaginary", classify_phase(params).value == "fully_imaginary"),
        ("双正交单位分解",
         np.allclose(decompose_bloch(params, 1.0).resolution_of_identity(), np.eye(2))),
        ("费米子共振模式 ±1, ±3, ±5",
         find_resonances(params).n_modes == (-5, -3, -1, 1, 3, 5)),
        ("高温熵 ≈ ln 2",
         abs(thermo_sweep(params.with_changes(gamma=0.5), [1e-4], max_workers=1).S[0] - np.log(2)) < 1e-4),
    ]
    passed = True
    for label, ok in checks:
        print(f"{'✅' if ok else '❌'} {label}")
        passed = passed and ok
    return passed


def main():
    """主函数"""
    print("🔬 iTCFlow 环境检查工具")
    print("=" * 50)

    all_checks_passed = check_python_version()

    if not check_python_packages():
        print("\n❓ 是否要自动安装缺失的依赖包? (y/n): ", end="")
        response = input().strip().lower()
        if response in ['y', 'yes', '是'] and install_packages():
            all_checks_passed = check_python_packages() and all_checks_passed
        else:
            all_checks_passed = False

    if not check_environment():
        all_checks_passed = False
    create_output_directory()

    if all_checks_passed and not run_basic_test():
        all_checks_passed = False

    print("\n" + "=" * 50)
    if all_checks_passed:
        print("🎉 环境检查完成！iTCFlow已准备就绪")
        print("\n🚀 快速开始:")
        print("   列出预设: python main.py presets")
        print("   运行预设: python main.py greens-tau --preset fig2")
        print("   全部预设: ./run_presets.sh")
    else:
        print("⚠️  环境检查发现问题，请解决上述问题后重新运行")
        print("\n💡 获取帮助:")
        print("   1. 查看 README.md")
        print("   2. 检查依赖安装: pip install -r requirements.txt")

    return all_checks_passed


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
