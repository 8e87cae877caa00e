"""setuptools backend that ignores setup.py.

setup.py in this repo is an interactive project-initialisation script, not a
setuptools script, so the build must not execute it. All metadata lives in
pyproject.toml.
"""
from setuptools import build_meta as _orig
from setuptools.build_meta import _BuildMetaBackend


class _Backend(_BuildMetaBackend):
    def run_setup(self, setup_script="setup.py"):
        exec(compile("from setuptools import setup; setup()", "<pyproject>", "exec"),
             {"__name__": "__main__", "__file__": setup_script})


_backend = _Backend()
get_requires_for_build_wheel = _backend.get_requires_for_build_wheel
get_requires_for_build_sdist = _backend.get_requires_for_build_sdist
get_requires_for_build_editable = _backend.get_requires_for_build_editable
prepare_metadata_for_build_wheel = _backend.prepare_metadata_for_build_wheel
prepare_metadata_for_build_editable = _backend.prepare_metadata_for_build_editable
build_wheel = _backend.build_wheel
build_sdist = _backend.build_sdist
build_editable = _backend.build_editable
