#!/usr/bin/env python3
"""
Setup script for the active domain adaptation toolkit
"""

import os
import subprocess
import sys


def install_requirements():
    """Install required packages from requirements.txt"""
    print("📦 Installing required packages...")

    try:
        subprocess.check_call([
            sys.executable, "-m", "pip", "install", "-r", "requirements.txt"
        ])
        print("✅ Requirements installed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ Failed to install requirements: {e}")
        return False


def create_directories():
    """Create the output directory named by SDM_OUTPUT_DIR"""
    print("📁 Creating necessary directories...")

    directory = os.environ.get("SDM_OUTPUT_DIR", "output")
    os.makedirs(directory, exist_ok=True)
    print(f"✅ Created directory: {directory}")
    return True


def check_config_files():
    """Check that the sample configs and Streamlit settings exist"""
    print("📊 Checking configuration files...")

    config_files = [
        "data/sample_config.json",
        "data/texture_config.json",
        "streamlit/config.toml",
    ]

    all_exist = True
    for config_file in config_files:
        if os.path.exists(config_file):
            print(f"✅ {config_file} exists")
        else:
            print(f"❌ {config_file} missing")
            all_exist = False

    if not os.path.exists(".env"):
        print("ℹ️  No .env file; copy .env.example to change logging or output settings")
    return all_exist


def run_tests():
    """Run the test suite to verify setup"""
    print("🧪 Running tests...")

    result = subprocess.run([sys.executable, "-m", "pytest", "tests/", "-q"], capture_output=True, text=True)
    if result.returncode == 0:
        print("✅ Tests passed")
        return True
    print("❌ Tests failed")
    print(result.stdout)
    print(result.stderr)
    return False


def main():
    """Main setup function"""
    print("🎯 Active Domain Adaptation Toolkit Setup")
    print("=" * 40)

    if sys.version_info < (3, 8):
        print("❌ Python 3.8+ is required")
        sys.exit(1)

    print(f"✅ Python version: {sys.version.split()[0]}")

    steps = [
        install_requirements,
        create_directories,
        check_config_files,
        run_tests
    ]

    all_passed = True
    for step in steps:
        print()
        if not step():
            all_passed = False

    print("\n" + "=" * 40)
    if all_passed:
        print("🎉 Setup completed successfully!")
        print("\nTo run an experiment:")
        print("   python run.py simulate --config data/sample_config.json --out-dir output/gaussian")
        print("To open the dashboard:")
        print("   python run.py dashboard")
    else:
        print("⚠️  Setup completed with some issues.")
        print("Please check the errors above and resolve them.")


if __name__ == "__main__":
    main()
