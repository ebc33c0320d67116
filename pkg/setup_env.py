#!/usr/bin/env python3
"""
Environment setup for the transaction simulator
Checks the Python version and installs the pinned requirements
"""

import subprocess
import sys
from pathlib import Path

REQUIREMENTS = Path(__file__).with_name("requirements.txt")
TEST_REQUIREMENTS = Path(__file__).with_name("requirements_test.txt")


def install_package(package):
    """Install a package using pip"""
    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", package])
        return True
    except subprocess.CalledProcessError:
        return False


def check_python_version(version=None):
    """Check if Python version is compatible"""
    version = version or sys.version_info
    if version[0] < 3 or (version[0] == 3 and version[1] < 9):
        print("❌ Python 3.9 or higher is required")
        print(f"   Current version: {version[0]}.{version[1]}")
        return False
    print(f"✅ Python version: {version[0]}.{version[1]}")
    return True


def read_requirements(path):
    """Pinned package specs of a requirements file, includes and comments skipped"""
    packages = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line and not line.startswith("-r"):
            packages.append(line)
    return packages


def main(with_tests=False):
    print("=== Transaction Simulator Setup ===\n")

    if not check_python_version():
        return 1

    packages = read_requirements(REQUIREMENTS)
    if with_tests:
        packages += read_requirements(TEST_REQUIREMENTS)

    print("\nInstalling required packages...")
    failed_packages = []
    for package in packages:
        print(f"Installing {package}...")
        if install_package(package):
            print(f"✅ {package} installed successfully")
        else:
            print(f"❌ Failed to install {package}")
            failed_packages.append(package)

    if failed_packages:
        print(f"\n❌ Failed to install: {', '.join(failed_packages)}")
        print("Please install them manually using:")
        for package in failed_packages:
            print(f"   pip install {package}")
        return 1

    print("\n✅ All packages installed successfully!")
    print("\nNext steps:")
    print("1. Quick check: python minimal_test.py")
    print("2. One run: python harness.py run --out run.csv")
    print("3. An experiment: python harness.py preset fig1 --reps 5 --duration 50 --out fig1.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main(with_tests="--tests" in sys.argv[1:]))
