"""Hot numerical kernels with a compiled core and a pure-Python fallback.

The compiled extension is optional: environments without a C toolchain
still get a working package, just a slower one.  ``USING_COMPILED`` records
which implementation this process selected.
"""

from . import pyfallback

try:
    from . import _core
    _impl = _core
    USING_COMPILED = True
except ImportError:  # extension not built on this platform
    _core = None
    _impl = pyfallback
    USING_COMPILED = False

implementation_name = "compiled" if USING_COMPILED else "python"

ray_objective = _impl.ray_objective
ray_objective_gradient = _impl.ray_objective_gradient
gradient_descent = _impl.gradient_descent
nelder_mead = _impl.nelder_mead


def available_implementations() -> dict:
    """Importable kernel modules by name, for tests and benchmarks."""
    impls = {"python": pyfallback}
    if USING_COMPILED:
        impls["compiled"] = _core
    return impls


__all__ = [
    "USING_COMPILED",
    "implementation_name",
    "ray_objective",
    "ray_objective_gradient",
    "gradient_descent",
    "nelder_mead",
    "available_implementations",
]
