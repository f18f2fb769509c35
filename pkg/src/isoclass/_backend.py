"""Pick between the numba-compiled kernels and the wide-integer replica."""
from __future__ import annotations

import importlib.util
import os
import sys
import threading
import types
from pathlib import Path

_SOURCE = Path(__file__).with_name("_kernels.py")
_LOCK = threading.Lock()
_MODULES: dict[str, types.ModuleType] = {}

INT64_BOUND = 2**63


def _load(tag: str) -> types.ModuleType:
    spec = importlib.util.spec_from_file_location(f"isoclass._kernels_{tag}", _SOURCE)
    module = importlib.util.module_from_spec(spec)
    # numba's on-disk cache re-imports the defining module by name
    sys.modules[spec.name] = module
    spec.loader.exec_module(module)
    return module


def _build_compiled() -> types.ModuleType:
    import numba

    module = _load("jit")
    for name, obj in list(vars(module).items()):
        if isinstance(obj, types.FunctionType) and obj.__module__ == module.__name__:
            setattr(module, name, numba.njit(nogil=True, cache=True)(obj))
    return module


def _build_wide() -> types.ModuleType:
    module = _load("wide")
    module.INT = object
    return module


def wide() -> types.ModuleType:
    """Kernels running on Python ints; exact for any modulus."""
    with _LOCK:
        if "wide" not in _MODULES:
            _MODULES["wide"] = _build_wide()
        return _MODULES["wide"]


def compiled() -> types.ModuleType:
    """Kernels compiled with numba; residues must satisfy q**2 < 2**63."""
    if os.environ.get("ISOCLASS_NO_JIT"):
        return wide()
    with _LOCK:
        if "jit" not in _MODULES:
            _MODULES["jit"] = _build_compiled()
        return _MODULES["jit"]


def fast_limit(p: int) -> int:
    """Largest precision E with p**(2E) < 2**63 (0 if none)."""
    E = 0
    while p ** (2 * (E + 1)) < INT64_BOUND:
        E += 1
    return E


def fits_int64(p: int, E: int) -> bool:
    return p ** (2 * E) < INT64_BOUND


def for_precision(p: int, E: int) -> types.ModuleType:
    return compiled() if fits_int64(p, E) else wide()


def residue_dtype(p: int, E: int):
    import numpy as np

    return np.int64 if fits_int64(p, E) else object
