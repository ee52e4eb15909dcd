"""Build backend that packages the project from pyproject.toml.

setup.py in this repository is the interactive install/self-check script
(it pip-installs requirements and runs the tests), not a setuptools
configuration, so the stock setuptools backend must not execute it.
"""

from setuptools import build_meta as _orig
from setuptools.build_meta import *  # noqa: F401,F403


class _Backend(_orig._BuildMetaBackend):
    def run_setup(self, setup_script="setup.py"):
        from setuptools import setup

        setup()


_backend = _Backend()
get_requires_for_build_wheel = _backend.get_requires_for_build_wheel
get_requires_for_build_sdist = _backend.get_requires_for_build_sdist
get_requires_for_build_editable = _backend.get_requires_for_build_editable
prepare_metadata_for_build_wheel = _backend.prepare_metadata_for_build_wheel
prepare_metadata_for_build_editable = _backend.prepare_metadata_for_build_editable
build_wheel = _backend.build_wheel
build_sdist = _backend.build_sdist
build_editable = _backend.build_editable
