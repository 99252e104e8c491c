"""Small planar models with closed-form limiting orbits, used as test oracles.

All share f = 1 (or f = a) and h = -1 (or h = -a); the fast flow of the
symmetric one, db/da = -a, has the conics b + a^2/2 = const as orbits.
"""
from __future__ import annotations

import numpy as np

from ..model import SlowFastModel, StructureFlags

__all__ = [
    "symmetric_toy",
    "shifted_toy",
    "b_dependent_toy",
    "factor_toy",
    "separable_toy",
    "flipped_h_toy",
    "TOYS",
]


def _z(*xs):
    return 0.0 * sum(np.asarray(x, dtype=float) for x in xs)


def symmetric_toy(a_lim: float = 2.0) -> SlowFastModel:
    """f = 1, h = -1, g = a on (-a_lim, a_lim); chi vanishes for every orbit."""
    return SlowFastModel(
        f=lambda a, b, eps: 1.0 + _z(a, b),
        h=lambda a, b, eps: -1.0 + _z(a, b),
        g=lambda a, b, eps: a + _z(b),
        a_min=-a_lim, a_max=a_lim, a_bar=0.0, name="toy_symmetric",
        df_da=lambda a, b, eps: _z(a, b),
        dh_da=lambda a, b, eps: _z(a, b),
        dg_db=lambda a, b, eps: _z(a, b),
        flags=StructureFlags(h_independent_of_a=True))


def shifted_toy(shift: float = 0.25, a_lim: float = 2.0) -> SlowFastModel:
    """g = a - shift; the turning point moves to ``shift``."""
    return SlowFastModel(
        f=lambda a, b, eps: 1.0 + _z(a, b),
        h=lambda a, b, eps: -1.0 + _z(a, b),
        g=lambda a, b, eps: a - shift + _z(b),
        a_min=-a_lim, a_max=a_lim, a_bar=shift, name="toy_shifted",
        df_da=lambda a, b, eps: _z(a, b),
        dh_da=lambda a, b, eps: _z(a, b),
        dg_db=lambda a, b, eps: _z(a, b),
        flags=StructureFlags(h_independent_of_a=True))


def b_dependent_toy(k: float = 0.25, a_lim: float = 2.0) -> SlowFastModel:
    """g = a - k b, so lambda picks up the path integral of -k b."""
    return SlowFastModel(
        f=lambda a, b, eps: 1.0 + _z(a, b),
        h=lambda a, b, eps: -1.0 + _z(a, b),
        g=lambda a, b, eps: a - k * b,
        a_min=-a_lim, a_max=a_lim, a_bar=0.0, name="toy_b_dependent",
        df_da=lambda a, b, eps: _z(a, b),
        dh_da=lambda a, b, eps: _z(a, b),
        dg_db=lambda a, b, eps: -k + _z(a, b),
        flags=StructureFlags(h_independent_of_a=True))


def factor_toy(shift: float = 0.25, a_lim: float = 2.0) -> SlowFastModel:
    """g = (1 + b)(a - shift): factorizable with phi = 1 + b, G = a - shift."""
    return SlowFastModel(
        f=lambda a, b, eps: 1.0 + _z(a, b),
        h=lambda a, b, eps: -1.0 + _z(a, b),
        g=lambda a, b, eps: (1.0 + b) * (a - shift),
        a_min=-a_lim, a_max=a_lim, a_bar=shift, name="toy_factor",
        df_da=lambda a, b, eps: _z(a, b),
        dh_da=lambda a, b, eps: _z(a, b),
        dg_db=lambda a, b, eps: a - shift + _z(b),
        flags=StructureFlags(
            h_independent_of_a=True, g_factorizable=True,
            phi=lambda b: 1.0 + np.asarray(b, dtype=float),
            G=lambda a, b, eps: a - shift + _z(b),
            dG_db=lambda a, b, eps: _z(a, b)))


def separable_toy(turn: float = 1.0, k: float = 0.25, a_hi: float = 4.0) -> SlowFastModel:
    """f = a, h = -a, g = a - turn - k b on a > 0; f and h share the factor a."""
    return SlowFastModel(
        f=lambda a, b, eps: a + _z(b),
        h=lambda a, b, eps: -a + _z(b),
        g=lambda a, b, eps: a - turn - k * b,
        a_min=0.0, a_max=a_hi, a_bar=turn, name="toy_separable",
        df_da=lambda a, b, eps: 1.0 + _z(a, b),
        dh_da=lambda a, b, eps: -1.0 + _z(a, b),
        dg_db=lambda a, b, eps: -k + _z(a, b),
        flags=StructureFlags(separable_fh=True))


def flipped_h_toy(a_lim: float = 2.0) -> SlowFastModel:
    """The symmetric toy with h = +1, which breaks the sign condition on h."""
    return SlowFastModel(
        f=lambda a, b, eps: 1.0 + _z(a, b),
        h=lambda a, b, eps: 1.0 + _z(a, b),
        g=lambda a, b, eps: a + _z(b),
        a_min=-a_lim, a_max=a_lim, a_bar=0.0, name="toy_flipped_h")


TOYS = {
    "symmetric": symmetric_toy,
    "shifted": shifted_toy,
    "b_dependent": b_dependent_toy,
    "factor": factor_toy,
    "separable": separable_toy,
}
