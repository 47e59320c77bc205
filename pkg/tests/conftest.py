"""Shared lattice fixtures.

Lattice construction is deterministic, so the common lattices are built
once per session and shared read-only across test modules.
"""

from fractions import Fraction

import pytest

from vdwalk import LatticeParams, build_lattice, build_kernel


@pytest.fixture(scope="session")
def lat5():
    return build_lattice(LatticeParams(k=5, epsilon=Fraction(1, 8),
                                       window_radius=Fraction(3, 4)))


@pytest.fixture(scope="session")
def kern5(lat5):
    return build_kernel(lat5)


@pytest.fixture(scope="session")
def lat_tiny():
    # smallest usable window: handy for exhaustive pairwise checks
    return build_lattice(LatticeParams(k=4, epsilon=Fraction(1, 8),
                                       window_radius=Fraction(1, 2)))


@pytest.fixture(scope="session")
def kern_tiny(lat_tiny):
    return build_kernel(lat_tiny)
