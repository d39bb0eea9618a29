import numpy as np
import pytest

from mvcirc.lattice import make_lattice


@pytest.fixture
def ring8():
    return make_lattice(1, 8)


@pytest.fixture
def torus4():
    return make_lattice(2, 4)


def von_neumann_bits(vec: np.ndarray, region, n: int) -> float:
    """Entropy of a region from a state vector, in bits (brute force)."""
    region = sorted(region)
    rest = [q for q in range(n) if q not in region]
    psi = vec.reshape([2] * n).transpose(region + rest)
    psi = psi.reshape(2 ** len(region), 2 ** len(rest))
    lam = np.linalg.svd(psi, compute_uv=False) ** 2
    lam = lam[lam > 1e-14]
    return float(-(lam * np.log2(lam)).sum())
