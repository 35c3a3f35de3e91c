import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinlab.lattice import (
    build_cube, build_tilings, even_odd_ordering, even_odd_partition, lexicographic_ordering,
    longest_path_subsequence, parity,
)

sides_strategy = st.integers(1, 3).flatmap(lambda d: st.lists(st.integers(1, 5), min_size=d, max_size=d))


def brute_edges(sides):
    pts = list(product(*[range(s) for s in sides]))
    out = set()
    for a in pts:
        for b in pts:
            if sum(abs(x - y) for x, y in zip(a, b)) == 1:
                out.add(tuple(sorted((np.ravel_multi_index(a, sides), np.ravel_multi_index(b, sides)))))
    return sorted(out)


@given(sides_strategy)
@settings(max_examples=40, deadline=None)
def test_cube_matches_brute_force(sides):
    cube = build_cube(len(sides), sides)
    assert cube.n == math.prod(sides)
    assert [tuple(e) for e in cube.edges.tolist()] == brute_edges(sides)
    # each boundary point is outside the box at distance 1
    for b in cube.boundary.tolist():
        assert any(not 0 <= c < s for c, s in zip(b, sides))
        assert np.abs(cube.vertices - np.array(b)).sum(axis=1).min() == 1
    degree = np.diff(cube.nbr_ptr)
    # interior degree plus boundary degree is 2d everywhere
    bdeg = np.bincount(cube.boundary_edges[:, 0], minlength=cube.n)
    assert np.all(degree + bdeg == 2 * len(sides))


def test_small_cube_counts():
    cube = build_cube(2, [2, 3])
    assert (cube.n, cube.num_edges, len(cube.boundary)) == (6, 7, 10)
    assert cube.index((1, 2)) == 5
    with pytest.raises(ValueError):
        cube.index((2, 0))
    with pytest.raises(ValueError):
        build_cube(2, [3])
    with pytest.raises(ValueError):
        build_cube(1, [0])


def test_parity_classes_are_independent_sets():
    cube = build_cube(3, [3, 2, 4])
    even, odd = even_odd_partition(cube)
    par = parity(cube)
    assert np.all(par[even] == 0) and np.all(par[odd] == 1)
    assert np.all(par[cube.edges[:, 0]] != par[cube.edges[:, 1]])


@given(sides_strategy, st.sampled_from([1, 3, 5]))
@settings(max_examples=40, deadline=None)
def test_tilings_cover_and_separate(sides, L):
    cube = build_cube(len(sides), sides)
    til = build_tilings(cube, L)
    d = len(sides)
    assert til.m == (L + 3) ** d
    # every vertex lies in exactly L^d of the tilings
    assert np.all(til.membership(cube.n).sum(axis=0) == L ** d)
    for cubes in til.tilings:
        for c in cubes:
            coords = cube.vertices[c]
            assert np.all(coords.max(axis=0) - coords.min(axis=0) < L)
        for i in range(len(cubes)):
            for j in range(i + 1, len(cubes)):
                a, b = cube.vertices[cubes[i]], cube.vertices[cubes[j]]
                dist = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2).min()
                assert dist >= 4


def test_tiling_rejects_even_side():
    cube = build_cube(1, [5])
    for bad in (0, 2, 1.5):
        with pytest.raises(ValueError):
            build_tilings(cube, bad)


def test_longest_path_subsequence():
    cube = build_cube(2, [4, 4])
    assert even_odd_ordering(cube).pathlen == 2
    assert lexicographic_ordering(cube).pathlen == 7  # a monotone staircase through the box
    path = build_cube(1, [6])
    assert longest_path_subsequence(path, [5, 4, 3, 2, 1, 0]) == 6
    assert longest_path_subsequence(path, [0, 2, 4, 1, 3, 5]) == 2
    with pytest.raises(ValueError):
        longest_path_subsequence(path, [0, 1])
