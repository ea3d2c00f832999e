"""A sign flip in psi must be caught by the acceptance suite (criterion A2)."""
import numpy as np

from cklab import acceptance
from cklab.model import MixturePolynomial


def test_psi_sign_flip_breaks_fdt_reduction(monkeypatch):
    original = MixturePolynomial.kernel_coeffs

    def flipped(self):
        nu1, nu2, psi = original(self)
        return nu1, nu2, np.ascontiguousarray(-psi)

    acceptance.clear_cache()
    try:
        healthy = acceptance.criterion_a2()
        assert healthy.passed
        acceptance.clear_cache()
        monkeypatch.setattr(MixturePolynomial, "kernel_coeffs", flipped)
        mutated = acceptance.criterion_a2()
        assert not mutated.passed
        assert any(not c.passed and "C_fdt" in c.name for c in mutated.checks)
    finally:
        acceptance.clear_cache()
