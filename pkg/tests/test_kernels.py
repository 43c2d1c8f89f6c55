import numpy as np
import pytest

from coadapt import kernels
from coadapt.seeding import child_rng


@pytest.fixture(scope="module")
def cases():
    rng = child_rng(0, "kernel-cases")
    out = []
    for n in (1, 3, 6):
        queries = rng.normal(size=(4, 64, 8))
        keys = rng.normal(size=(n, 8))
        keys /= np.linalg.norm(keys, axis=1, keepdims=True)
        weights = rng.uniform(0.2, 1.8, size=n)
        blobs = rng.uniform(0.0, 1.0, size=(n, 64, 3))
        out.append((queries, keys, weights, blobs))
    return out


def _impls():
    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.append("numba")
    except ImportError:
        pass
    return names


def test_backends_agree_on_attention_and_mixing(cases):
    names = _impls()
    if len(names) < 2:
        pytest.skip("only one backend available")
    for queries, keys, weights, blobs in cases:
        results = {}
        for name in names:
            attention, mix, _ = kernels.backend_impls(name)
            for renorm in (True, False):
                maps = attention(queries, keys, 1.7, weights, renorm)
                img = mix(maps, blobs)
                results.setdefault(renorm, []).append((maps, img))
        for renorm, pair in results.items():
            (m1, i1), (m2, i2) = pair
            assert np.allclose(m1, m2, atol=1e-12)
            assert np.allclose(i1, i2, atol=1e-12)


def test_backends_agree_on_ssim():
    names = _impls()
    if len(names) < 2:
        pytest.skip("only one backend available")
    rng = child_rng(1, "kernel-ssim")
    a = rng.random((32, 32))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    vals = []
    for name in names:
        _, _, ssim_fn = kernels.backend_impls(name)
        vals.append(ssim_fn(a, b, 8, 4, 1e-4, 9e-4))
    assert vals[0] == pytest.approx(vals[1], abs=1e-12)


def test_attention_rows_stochastic_after_renorm(cases):
    queries, keys, weights, _ = cases[2]
    maps = kernels.attention_maps(queries, keys, 2.0, weights, True)
    assert np.max(np.abs(maps.sum(axis=2) - 1.0)) < 1e-9


def test_mix_pixels_clamped(cases):
    queries, keys, weights, blobs = cases[1]
    maps = kernels.attention_maps(queries, keys, 2.0, 3.0 * weights, False)
    img = kernels.mix_pixels(maps, blobs)
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_env_flag_selection(monkeypatch):
    monkeypatch.setenv("COADAPT_BACKEND", "numpy")
    assert kernels._pick_backend() == "numpy"
    monkeypatch.setenv("COADAPT_BACKEND", "auto")
    assert kernels._pick_backend() in ("numba", "numpy")
    monkeypatch.setenv("COADAPT_BACKEND", "bogus")
    with pytest.raises(ValueError):
        kernels._pick_backend()


def test_unknown_backend_impls():
    with pytest.raises(KeyError):
        kernels.backend_impls("cuda")
