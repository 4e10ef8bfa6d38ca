import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from chromabench.imagecore import (
    CameraProfile,
    LinearImage,
    load_image,
    normalize_estimate,
    save_image,
    sidecar_path,
    subtract_black_level,
)


def write_ppm(path, samples, width, height, meta=None):
    header = f"P6\n{width} {height}\n65535\n".encode()
    path.write_bytes(header + struct.pack(f">{len(samples)}H", *samples))
    sidecar = sidecar_path(path)
    payload = {"camera_id": "cam", "black_level": 0, "bit_depth": 12, "saturation_level": 3300}
    payload.update(meta or {})
    sidecar.write_text(json.dumps(payload))


def test_load_reads_samples_exactly(tmp_path):
    p = tmp_path / "one.ppm"
    write_ppm(p, [100, 200, 300], 1, 1)
    img = load_image(p)
    assert img.width == 1 and img.height == 1
    assert img.bit_depth == 12
    assert img.data.tolist() == [[[100.0, 200.0, 300.0]]]
    assert img.camera.camera_id == "cam"


def test_load_rejects_sample_over_bit_depth(tmp_path):
    p = tmp_path / "hot.ppm"
    write_ppm(p, [5000, 0, 0], 1, 1)
    with pytest.raises(ValueError, match="exceeds bit depth"):
        load_image(p)


def test_load_requires_sidecar(tmp_path):
    p = tmp_path / "orphan.ppm"
    header = b"P6\n1 1\n65535\n"
    p.write_bytes(header + struct.pack(">3H", 1, 2, 3))
    with pytest.raises(FileNotFoundError, match="missing sidecar"):
        load_image(p)


@pytest.mark.parametrize(
    "raw",
    [
        b"P5\n1 1\n65535\n\x00\x00",
        b"P6\n1 1\n255\n\x00\x00\x00\x00\x00\x00",
        b"P6\n1 1\n65535\n\x00\x00",  # truncated samples
        b"P6\nx 1\n65535\n",
    ],
)
def test_load_rejects_malformed_files(tmp_path, raw):
    p = tmp_path / "bad.ppm"
    p.write_bytes(raw)
    sidecar_path(p).write_text("{}")
    with pytest.raises(ValueError, match="malformed"):
        load_image(p)


def test_header_comments_are_skipped(tmp_path):
    p = tmp_path / "c.ppm"
    raw = b"P6\n# a comment\n2 1\n# another\n65535\n" + struct.pack(">6H", 1, 2, 3, 4, 5, 6)
    p.write_bytes(raw)
    sidecar_path(p).write_text("{}")
    img = load_image(p)
    assert img.data.tolist() == [[[1, 2, 3], [4, 5, 6]]]


@settings(max_examples=30, deadline=None)
@given(
    hnp.arrays(
        dtype=np.int64,
        shape=st.tuples(st.integers(1, 8), st.integers(1, 8), st.just(3)),
        elements=st.integers(0, 4095),
    )
)
def test_save_load_round_trip_bit_exact(tmp_path_factory, arr):
    tmp = tmp_path_factory.mktemp("rt")
    img = LinearImage(arr.astype(float), bit_depth=12, camera=CameraProfile("cam", 129.0))
    save_image(img, tmp / "img.ppm")
    back = load_image(tmp / "img.ppm")
    assert np.array_equal(back.data, img.data)
    assert back.bit_depth == img.bit_depth
    assert back.camera == img.camera


def test_save_rejects_non_integer_samples(tmp_path):
    img = LinearImage(np.full((1, 1, 3), 1.5))
    with pytest.raises(ValueError, match="non-integer"):
        save_image(img, tmp_path / "x.ppm")


def test_sidecar_ignores_unknown_fields(tmp_path):
    p = tmp_path / "u.ppm"
    write_ppm(p, [1, 2, 3], 1, 1, meta={"future_field": [1, 2], "black_level": 7})
    assert load_image(p).camera.black_level == 7.0


def test_subtract_black_level_reference_case():
    img = LinearImage(np.full((1, 1, 3), 329.0))
    assert subtract_black_level(img, 129).data.tolist() == [[[200.0, 200.0, 200.0]]]


def test_subtract_zero_is_identity():
    img = LinearImage(np.arange(12, dtype=float).reshape(2, 2, 3))
    assert np.array_equal(subtract_black_level(img, 0).data, img.data)


def test_subtract_clamps_at_zero():
    img = LinearImage(np.full((1, 1, 3), 100.0))
    assert subtract_black_level(img, 129).data.tolist() == [[[0.0, 0.0, 0.0]]]


def test_subtract_rejects_negative_level():
    img = LinearImage(np.zeros((1, 1, 3)))
    with pytest.raises(ValueError):
        subtract_black_level(img, -1)


@settings(max_examples=50, deadline=None)
@given(
    hnp.arrays(
        dtype=np.float64,
        shape=(3, 3, 3),
        elements=st.floats(0, 4095, allow_nan=False),
    ),
    st.floats(0, 500, allow_nan=False),
)
def test_subtract_is_monotone_and_nonnegative(arr, level):
    img = LinearImage(arr)
    out = subtract_black_level(img, level)
    assert np.all(out.data <= img.data)
    assert np.all(out.data >= 0)


def test_normalize_fixtures():
    np.testing.assert_allclose(
        normalize_estimate((1, 1, 1)), np.full(3, 1 / np.sqrt(3)), rtol=0, atol=1e-15
    )
    assert normalize_estimate((2, 0, 0)).tolist() == [1.0, 0.0, 0.0]
    # |(1, 2, 2)| = 3, so the result is exactly the division by 3
    assert np.array_equal(normalize_estimate((1, 2, 2)), np.array([1, 2, 2]) / 3.0)


def test_normalize_rejects_zero_vector():
    with pytest.raises(ValueError, match="degenerate illuminant"):
        normalize_estimate((0, 0, 0))


@given(
    st.tuples(
        st.floats(0, 1e6, allow_nan=False),
        st.floats(0, 1e6, allow_nan=False),
        st.floats(0, 1e6, allow_nan=False),
    ).filter(lambda v: any(x > 1e-9 for x in v))
)
def test_normalize_returns_unit_vectors(v):
    assert abs(np.linalg.norm(normalize_estimate(v)) - 1.0) <= 1e-12


def test_linear_image_invariants():
    with pytest.raises(ValueError):
        LinearImage(np.zeros((0, 1, 3)))
    with pytest.raises(ValueError):
        LinearImage(np.zeros((1, 1, 4)))
    with pytest.raises(ValueError):
        LinearImage(np.full((1, 1, 3), -1.0))
    with pytest.raises(ValueError):
        LinearImage(np.full((1, 1, 3), np.nan))
    img = LinearImage(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0  # stored array is read-only


def test_camera_profile_invariants():
    with pytest.raises(ValueError):
        CameraProfile("c", black_level=-1)
    with pytest.raises(ValueError):
        CameraProfile("c", black_level=100, saturation_level=100)
    assert CameraProfile("c").saturation_level == 3300.0
