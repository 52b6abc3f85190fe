"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports; set ``BYZSIM_BACKEND=python``
to force the fallback (``compiled`` makes a missing extension an error).
"""
import os

from byzsim._kernels import _pykernels

python_backend = _pykernels

try:
    from byzsim._kernels import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None


def _select():
    choice = os.environ.get("BYZSIM_BACKEND", "auto").strip().lower()
    if choice == "python":
        return python_backend
    if choice == "compiled":
        if compiled_backend is None:
            raise ImportError("BYZSIM_BACKEND=compiled but byzsim._kernels._ckernels is not built")
        return compiled_backend
    if choice != "auto":
        raise ValueError(f"unknown BYZSIM_BACKEND {choice!r}")
    return compiled_backend if compiled_backend is not None else python_backend


K = _select()


def available_backends():
    return [b for b in (compiled_backend, python_backend) if b is not None]


def use(backend):
    """Swap the active backend (a module or its name); used by tests and the benchmark."""
    global K
    if isinstance(backend, str):
        found = [b for b in available_backends() if b.NAME == backend]
        if not found:
            raise ValueError(f"backend {backend!r} is not available")
        backend = found[0]
    K = backend


def active():
    return K
