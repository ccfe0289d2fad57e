import os
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
    """Configure and build the CMake project, then drop the compiled module
    into the package directory setuptools is assembling."""

    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        import pybind11

        configure = [
            "cmake",
            "-S", str(source_dir),
            "-B", str(build_dir),
            "-DDSTREAM_BUILD_PYTHON=ON",
            f"-DPython3_EXECUTABLE={sys.executable}",
            f"-Dpybind11_DIR={pybind11.get_cmake_dir()}",
            f"-DCMAKE_BUILD_TYPE={os.environ.get('DSTREAM_BUILD_TYPE', 'Release')}",
        ]
        if shutil.which("ninja"):
            configure += ["-G", "Ninja"]
        subprocess.run(configure, check=True)
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "dstream_core",
             "-j", str(os.cpu_count() or 2)],
            check=True,
        )

        module_dir = build_dir / "python" / "dstream"
        built = sorted(module_dir.glob("_core*.so")) + sorted(module_dir.glob("_core*.pyd"))
        if not built:
            raise RuntimeError(f"compiled module not found under {module_dir}")
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built[0], dest)


setup(
    packages=["dstream"],
    package_dir={"": "python"},
    ext_modules=[CMakeExtension("dstream._core")],
    cmdclass={"build_ext": CMakeBuild},
    zip_safe=False,
)
