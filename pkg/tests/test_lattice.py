import numpy as np
import pytest

from mvcirc.lattice import make_lattice, quarter_partition


def test_smallest_ring_bonds():
    lat = make_lattice(1, 4)
    assert lat.bonds() == [(0, 1), (0, 3), (1, 2), (2, 3)]


def test_torus_neighbors_raster():
    lat = make_lattice(2, 3)
    assert sorted(int(j) for j in lat.neighbors[0]) == [1, 2, 3, 6]


def test_degenerate_sizes_rejected():
    with pytest.raises(ValueError):
        make_lattice(2, 2)
    with pytest.raises(ValueError):
        make_lattice(1, 3)
    with pytest.raises(ValueError):
        make_lattice(3, 4)


@pytest.mark.parametrize("dim,L", [(1, 4), (1, 9), (2, 3), (2, 5)])
def test_neighbor_symmetry_and_counts(dim, L):
    lat = make_lattice(dim, L)
    deg = 2 * dim
    assert lat.neighbors.shape == (lat.n_sites, deg)
    for i in range(lat.n_sites):
        assert len(set(int(j) for j in lat.neighbors[i])) == deg
        for j in lat.neighbors[i]:
            assert i in lat.neighbors[int(j)]
    # sum of neighbor list lengths = 2 * number of bonds
    n_bonds = len(lat.bonds())
    assert lat.n_sites * deg == 2 * n_bonds
    assert n_bonds == (lat.n_sites if dim == 1 else 2 * lat.n_sites)


def test_quarter_partition_1d():
    part = quarter_partition(make_lattice(1, 8))
    regions = [sorted(np.nonzero(m)[0].tolist()) for m in part.masks]
    assert regions == [[0, 1], [2, 3], [4, 5], [6, 7]]
    assert part.geometry == "1d-arcs"


def test_quarter_partition_regions_cyclically_adjacent():
    lat = make_lattice(1, 16)
    part = quarter_partition(lat)
    for k in range(4):
        last = np.nonzero(part.masks[k])[0][-1]
        first = np.nonzero(part.masks[(k + 1) % 4])[0][0]
        assert first in lat.neighbors[last]


def test_quarter_partition_2d_columns():
    lat = make_lattice(2, 4)
    part = quarter_partition(lat)
    for k, mask in enumerate(part.masks):
        sites = np.nonzero(mask)[0]
        assert len(sites) == 4
        assert all(s % 4 == k for s in sites)


def test_quarter_partition_indivisible():
    with pytest.raises(ValueError):
        quarter_partition(make_lattice(1, 6))


def test_partition_labels_cover_all_sites():
    part = quarter_partition(make_lattice(2, 8))
    lab = part.labels
    assert sorted(np.unique(lab)) == [0, 1, 2, 3]
    assert all((lab == k).sum() == 16 for k in range(4))
