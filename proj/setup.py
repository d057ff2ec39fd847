"""CMake-driven extension build for the avisc package."""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).parent.resolve()
        build_temp = Path(self.build_temp).resolve() / "cmake"
        build_temp.mkdir(parents=True, exist_ok=True)

        cmake_args = [
            "-DCMAKE_BUILD_TYPE=Release",
            f"-DPython3_EXECUTABLE={sys.executable}",
            "-DAVISC_BUILD_PYTHON=ON",
            "-DAVISC_BUILD_TESTS=OFF",
            "-DAVISC_BUILD_CLI=OFF",
        ]
        subprocess.run(
            ["cmake", "-S", str(source_dir), "-B", str(build_temp), *cmake_args],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_temp), "--target", "_avisc", "-j"],
            check=True,
        )

        built = next((build_temp / "python" / "avisc").glob("_avisc.*"))
        target = Path(self.get_ext_fullpath(ext.name)).resolve()
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built, target)


setup(
    ext_modules=[CMakeExtension("avisc._avisc")],
    cmdclass={"build_ext": CMakeBuild},
)
