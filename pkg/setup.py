"""Build hook: compiles the BLS12-381 bindings in native/ with cargo."""

import os
import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

ROOT = Path(__file__).resolve().parent


class CargoExtension(Extension):
    def __init__(self, name: str, manifest: Path):
        super().__init__(name, sources=[])
        self.manifest = manifest


class build_cargo(build_ext):
    def build_extension(self, ext):
        if not isinstance(ext, CargoExtension):
            return super().build_extension(ext)
        cmd = ["cargo", "build", "--release", "--manifest-path", str(ext.manifest)]
        if os.environ.get("PSPOS_CARGO_OFFLINE", "1") == "1":
            cmd.append("--offline")
        subprocess.run(cmd, check=True, cwd=ext.manifest.parent)
        built = ext.manifest.parent / "target" / "release" / "lib_native.so"
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)


setup(
    ext_modules=[CargoExtension("pspos._native", ROOT / "native" / "Cargo.toml")],
    cmdclass={"build_ext": build_cargo},
)
