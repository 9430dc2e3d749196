import filecmp
import json
import struct

import numpy as np
import pytest

from intrinsic_arch.fmap import FmapError, accumulate_tap, decode_fmap, encode_fmap, read_fmap, read_manifest
from intrinsic_arch.spectra import eigenspectrum, finalize, intrinsic_dim
from intrinsic_arch.synth import SynthError, SynthSpec, generate, load_specs, target_covariance, variable_resolution


def test_fmap_layout_is_little_endian_channel_major():
    x = np.arange(2 * 3 * 4, dtype=np.float32).reshape(2, 3, 4)
    raw = encode_fmap(x)
    assert raw[:4] == b"FMAP"
    assert struct.unpack("<HIII", raw[4:18]) == (1, 2, 3, 4)
    assert struct.unpack("<3f", raw[18:30]) == (0.0, 1.0, 2.0)
    np.testing.assert_array_equal(decode_fmap(raw), x)


@pytest.mark.parametrize(
    "mutate,msg",
    [
        (lambda b: b"FMAQ" + b[4:], "bad magic"),
        (lambda b: b[:4] + struct.pack("<H", 2) + b[6:], "version"),
        (lambda b: b[:-4], "expected"),
        (lambda b: b[:10], "truncated"),
    ],
)
def test_fmap_header_errors(tmp_path, mutate, msg):
    path = tmp_path / "0.fmap"
    path.write_bytes(mutate(encode_fmap(np.zeros((2, 2, 2), np.float32))))
    with pytest.raises(FmapError, match=msg) as exc:
        read_fmap(path)
    assert "0.fmap" in str(exc.value)


def test_missing_manifest(tmp_path):
    with pytest.raises(FmapError, match="manifest"):
        read_manifest(tmp_path)


@pytest.fixture(scope="module")
def small_archive(tmp_path_factory):
    out = tmp_path_factory.mktemp("arch")
    specs = [
        SynthSpec("a", tuple(np.linspace(1, 0.1, 8)), 120, ((3, 3), (2, 5))),
        SynthSpec("dead", (0.0,) * 4, 5),
    ]
    return generate(specs, out, seed=11)


def test_archive_manifest_and_oracle(small_archive):
    manifest = read_manifest(small_archive)
    assert manifest == [{"id": "a", "channels": 8, "images": 120}, {"id": "dead", "channels": 4, "images": 5}]
    oracle = json.loads((small_archive / "oracle.json").read_text())
    assert oracle["seed"] == 11 and oracle["taps"][0]["noise"] == 0.0
    assert len(oracle["taps"][0]["eigenvalues"]) == 8


def test_variable_resolutions_cycle(small_archive):
    assert read_fmap(small_archive / "a" / "0.fmap").shape == (8, 3, 3)
    assert read_fmap(small_archive / "a" / "1.fmap").shape == (8, 2, 5)
    assert read_fmap(small_archive / "a" / "2.fmap").shape == (8, 3, 3)


def test_dead_tap(small_archive):
    acc = accumulate_tap(small_archive, "dead", 4)
    s = eigenspectrum(finalize(acc), "dead")
    assert s.raw_max == 0.0 and intrinsic_dim(s) == 0


@pytest.mark.parametrize("threads", [2, 4, 8])
def test_threaded_accumulation_matches_sequential(small_archive, threads):
    seq = finalize(accumulate_tap(small_archive, "a", 8, threads=1))
    par = finalize(accumulate_tap(small_archive, "a", 8, threads=threads))
    np.testing.assert_allclose(par, seq, rtol=1e-10, atol=0)


def test_seed_determinism(tmp_path):
    spec = SynthSpec("t", (1.0, 0.5, 0.25), 20, ((2, 2),), noise=1e-3)
    a, b, c = generate(spec, tmp_path / "a", 3), generate(spec, tmp_path / "b", 3), generate(spec, tmp_path / "c", 4)
    cmp = filecmp.dircmp(a / "t", b / "t")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    assert (a / "oracle.json").read_bytes() == (b / "oracle.json").read_bytes()
    assert (a / "t" / "0.fmap").read_bytes() != (c / "t" / "0.fmap").read_bytes()


def test_identity_covariance_recovered(tmp_path):
    out = generate(SynthSpec("t", (1.0,) * 4, 3000, ((4, 4),)), tmp_path, seed=0)
    cov = finalize(accumulate_tap(out, "t", 4))
    np.testing.assert_allclose(cov, np.eye(4), atol=0.05)


def test_spectrum_converges_to_target(tmp_path):
    lam = np.array([4.0, 2.0, 1.0, 0.5, 0.25, 0.1])
    out = generate(SynthSpec("t", tuple(lam), 5000, ((4, 4),)), tmp_path, seed=1)
    s = eigenspectrum(finalize(accumulate_tap(out, "t", 6)))
    np.testing.assert_allclose(s.values, lam / lam.max(), rtol=0.05)


def test_variable_resolution_matches_fixed(tmp_path):
    spec = SynthSpec("t", (3.0, 1.0, 0.2), 3000)
    fixed = finalize(accumulate_tap(variable_resolution(spec, [(4, 4)], tmp_path / "f", 5), "t", 3))
    varied = finalize(accumulate_tap(variable_resolution(spec, [(2, 8), (8, 2)], tmp_path / "v", 5), "t", 3))
    truth = target_covariance(spec, 5)
    scale = np.abs(truth).max()
    np.testing.assert_allclose(fixed, varied, atol=0.05 * scale)


def test_single_resolution_equals_generate(tmp_path):
    spec = SynthSpec("t", (1.0, 0.3), 4, ((3, 2),))
    a = generate(spec, tmp_path / "g", 9)
    b = variable_resolution(spec, [(3, 2)], tmp_path / "v", 9)
    assert (a / "t" / "3.fmap").read_bytes() == (b / "t" / "3.fmap").read_bytes()


def test_one_by_one_resolution_is_single_outer_product(tmp_path):
    out = generate(SynthSpec("t", (1.0, 0.5), 1, ((1, 1),)), tmp_path, 2)
    v = read_fmap(out / "t" / "0.fmap").reshape(2).astype(np.float64)
    np.testing.assert_allclose(finalize(accumulate_tap(out, "t", 2)), np.outer(v, v), rtol=1e-15)


@pytest.mark.parametrize(
    "entry",
    [
        {"id": "t", "eigenvalues": [], "n_images": 1},
        {"id": "t", "eigenvalues": [-1.0], "n_images": 1},
        {"id": "t", "eigenvalues": [1.0], "n_images": 0},
        {"id": "t", "eigenvalues": [1.0], "n_images": 1, "resolutions": [[0, 3]]},
        {"id": "t", "eigenvalues": [1.0, 2.0], "channels": 3, "n_images": 1},
        {"eigenvalues": [1.0], "n_images": 1},
    ],
)
def test_invalid_specs(entry):
    with pytest.raises(SynthError):
        load_specs({"taps": [entry]})
