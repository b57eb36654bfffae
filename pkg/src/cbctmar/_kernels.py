"""Kernel dispatch: the compiled extension when it imports, numpy otherwise.

``CBCTMAR_BACKEND`` is deliberately not consulted (configuration is file
based); tests and benchmarks switch explicitly with :func:`use_backend`.
"""
from __future__ import annotations

from contextlib import contextmanager

from . import _pykernels

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

NAMES = ("trace_ray", "project_values", "project_labels", "backproject",
         "inpaint_harmonic", "region_grow", "im2col3", "philox_uniform", "mc_view")

_active = None


def available() -> list[str]:
    return ["compiled", "python"] if _core is not None else ["python"]


def backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernels are not built")
        mod = _core
    elif name == "python":
        mod = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    g = globals()
    for n in NAMES:
        g[n] = getattr(mod, n)
    _active = name


@contextmanager
def use_backend(name: str):
    prev = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


set_backend("compiled" if _core is not None else "python")
