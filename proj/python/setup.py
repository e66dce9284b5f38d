import os

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)

ext = Pybind11Extension(
    "swin_core",
    sources=[
        os.path.join(HERE, "bindings.cpp"),
        os.path.join(ROOT, "src", "common.cpp"),
        os.path.join(ROOT, "src", "windowing.cpp"),
    ],
    include_dirs=[os.path.join(ROOT, "include"), os.path.join(ROOT, "vendor")],
    cxx_std=20,
    extra_compile_args=["-O2"],
)

setup(
    name="swin-core",
    version="0.1.0",
    description="Shifted-window transformer core operations",
    ext_modules=[ext],
    cmdclass={"build_ext": build_ext},
)
