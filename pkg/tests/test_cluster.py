import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from latentkit import cluster as clu
from latentkit.errors import ConfigError, LatentKitError


def test_hand_example():
    D = np.array([[0, 1, 5, 6], [1, 0, 5, 6], [5, 5, 0, 4], [6, 6, 4, 0]], dtype=float)
    dg = clu.single_linkage(D, labels=list("abcd"))
    assert [(m.a, m.b, m.height, m.new_id, m.size) for m in dg.merges] == [
        (0, 1, 1.0, 4, 2),
        (2, 3, 4.0, 5, 2),
        (4, 5, 5.0, 6, 4),
    ]
    assert clu.cut(dg, 2) == [0, 0, 1, 1]
    assert clu.cut(dg, 3) == [0, 0, 1, 2]
    assert clu.cut(dg, 1) == [0, 0, 0, 0]
    assert clu.cut(dg, 4) == [0, 1, 2, 3]


def test_ties_break_on_smallest_pair():
    D = np.array([[0, 2, 2], [2, 0, 2], [2, 2, 0]], dtype=float)
    dg = clu.single_linkage(D)
    assert (dg.merges[0].a, dg.merges[0].b) == (0, 1)
    assert (dg.merges[1].a, dg.merges[1].b) == (2, 3)


def same_partition(a, b):
    return len(set(zip(a, b))) == len(set(a)) == len(set(b))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(3, 12), st.sampled_from(["single", "average"]))
def test_matches_reference_linkage(seed, p, method):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(p, 2))
    D = np.sqrt(clu.squared_euclidean(X))
    dg = clu.agglomerate(D, linkage=method)
    Z = linkage(squareform(D, checks=False), method=method)
    np.testing.assert_allclose(dg.heights, Z[:, 2], atol=1e-12)
    for k in range(1, p + 1):
        ref = fcluster(Z, k, criterion="maxclust") if k < p else np.arange(p)
        if len(set(ref)) == k:
            assert same_partition(clu.cut(dg, k), ref)


def test_squared_euclidean_from_configuration():
    X = np.array([[0.0, 0.0], [3.0, 4.0]])
    np.testing.assert_allclose(clu.squared_euclidean(X), [[0, 25], [25, 0]])
    dg = clu.single_linkage(X=X)
    assert dg.heights == [25.0]


def test_errors():
    with pytest.raises(ConfigError):
        clu.single_linkage()
    with pytest.raises(ConfigError):
        clu.agglomerate(np.zeros((2, 2)), linkage="complete")
    with pytest.raises(LatentKitError):
        clu.agglomerate(np.zeros((1, 1)))
    dg = clu.single_linkage(np.array([[0, 1], [1, 0.0]]))
    with pytest.raises(LatentKitError) as e:
        clu.cut(dg, 3)
    assert e.value.code == "DOMAIN_ERROR"
