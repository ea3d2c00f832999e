"""cklab: two-time dynamics of spherical mixed p-spin models.

Submodules: :mod:`cklab.model`, :mod:`cklab.noncrossing`, :mod:`cklab.fdt`,
:mod:`cklab.twotime`, :mod:`cklab.langevin`, :mod:`cklab.cli`.
"""
__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
from .model import MixturePolynomial, SoftPotential  # noqa: E402

__all__ = ["BACKEND", "MixturePolynomial", "SoftPotential", "__version__"]
