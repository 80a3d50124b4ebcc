import numpy as np
import pytest

from latentkit import synth
from latentkit.errors import ConfigError, LatentKitError


def test_quantile_thresholds_give_equal_categories():
    T = synth.quantile_thresholds(5)
    np.testing.assert_allclose(T, [-0.8416212, -0.2533471, 0.2533471, 0.8416212], atol=1e-7)
    spec = synth.simple_structure(p=5, m=1, n=20000, seed=1)
    counts = np.bincount(synth.gen_likert(spec).values[:, 0].astype(int), minlength=6)[1:]
    np.testing.assert_allclose(counts / 20000, 0.2, atol=0.01)


def test_simple_structure_layout():
    spec = synth.simple_structure(p=10, m=2, low=0.6, high=0.8, phi_offdiag=0.3, n=5)
    assert spec.loadings[0, 0] == pytest.approx(0.6) and spec.loadings[4, 0] == pytest.approx(0.8)
    assert spec.loadings[5, 0] == 0 and spec.loadings[9, 1] == pytest.approx(0.8)
    R = spec.population_matrix()
    np.testing.assert_allclose(np.diag(R), 1.0)
    assert R[0, 5] == pytest.approx(0.6 * 0.3 * 0.6)
    with pytest.raises(ConfigError):
        synth.simple_structure(p=10, m=3)


def test_generation_is_deterministic_and_row_addressable():
    spec = synth.simple_structure(p=10, m=2, n=50, seed=7)
    a = synth.gen_likert(spec)
    b = synth.gen_likert(spec)
    np.testing.assert_array_equal(a.values, b.values)
    sub = synth.latent_scores(spec, [49, 3])
    full = synth.latent_scores(spec)
    np.testing.assert_array_equal(sub, full[[49, 3]])
    other = synth.gen_likert(synth.simple_structure(p=10, m=2, n=50, seed=8))
    assert not np.array_equal(a.values, other.values)
    assert a.respondent_ids[0] == "r00001" and a.values.min() >= 1 and a.values.max() <= 5


def test_sample_covariance_approaches_population():
    spec = synth.simple_structure(p=6, m=2, n=20000, seed=2)
    Z = synth.latent_scores(spec)
    np.testing.assert_allclose(np.corrcoef(Z, rowvar=False), spec.population_matrix(), atol=0.03)


def test_spec_validation_and_roundtrip(tmp_path):
    with pytest.raises(LatentKitError):
        synth.FactorModelSpec(np.ones((3, 2)) * 0.5, [[1, 0.2], [0.3, 1]], 10)
    bad = synth.FactorModelSpec(np.ones((3, 2)) * 0.5, [[1, 1.2], [1.2, 1]], 10)
    with pytest.raises(LatentKitError) as e:
        synth.latent_scores(bad)
    assert e.value.code == "DOMAIN_ERROR"
    heavy = synth.FactorModelSpec(np.full((3, 1), 1.1), [[1.0]], 10)
    assert "RESCALED" in heavy.flags
    spec = synth.simple_structure(p=4, m=2, n=3, seed=4)
    path = tmp_path / "spec.json"
    import json

    path.write_text(json.dumps(spec.to_dict()))
    again = synth.FactorModelSpec.load(path)
    np.testing.assert_array_equal(synth.gen_likert(again).values, synth.gen_likert(spec).values)
    with pytest.raises(ConfigError):
        synth.FactorModelSpec.from_dict({"phi": [[1]]})


def test_codebook_follows_planted_loadings():
    spec = synth.simple_structure(p=6, m=2, n=5)
    cb = synth.codebook_for(spec, ["a", "b"])
    assert cb.subscales() == {"a": ["item01", "item02", "item03"], "b": ["item04", "item05", "item06"]}


def test_planted_points():
    X, D = synth.planted_points(6, 2, seed=1)
    diff = X[:, None] - X[None]
    np.testing.assert_allclose(D, np.sqrt((diff**2).sum(-1)))
    _, Dn = synth.planted_points(6, 2, noise=0.1, seed=1)
    np.testing.assert_allclose(Dn, Dn.T)
    assert not np.allclose(Dn, D)
    with pytest.raises(LatentKitError):
        synth.planted_points(2, 2)
