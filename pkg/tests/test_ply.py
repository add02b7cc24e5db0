import numpy as np
import pytest

from cloudseg.cloud import PointCloud
from cloudseg.errors import MalformedPly, UnsupportedEncoding
from cloudseg.ply import load_ply, save_ply


def f32_cloud(rng, n=1000, labels=True) -> PointCloud:
    # positions generated at float32 precision so binary round trips are bit-exact
    positions = rng.normal(size=(n, 3)).astype(np.float32).astype(np.float64)
    colors = rng.random((n, 3))
    lab = rng.integers(0, 2, size=n) if labels else None
    return PointCloud(positions, colors, lab)


def test_single_point_ascii(tmp_path):
    path = tmp_path / "one.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n0 0 0 255 0 0\n"
    )
    cloud = load_ply(path)
    assert len(cloud) == 1
    np.testing.assert_allclose(cloud.colors, [[1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(cloud.positions, [[0.0, 0.0, 0.0]])


def test_zero_vertex_file(tmp_path):
    path = tmp_path / "empty.ply"
    save_ply(PointCloud(np.zeros((0, 3)), np.zeros((0, 3))), path, encoding="ascii")
    cloud = load_ply(path)
    assert len(cloud) == 0
    assert "element vertex 0" in path.read_text()


@pytest.mark.parametrize("encoding", ["ascii", "binary-le"])
def test_round_trip(tmp_path, rng, encoding):
    cloud = f32_cloud(rng)
    path = tmp_path / "cloud.ply"
    save_ply(cloud, path, encoding=encoding)
    loaded = load_ply(path)
    np.testing.assert_array_equal(loaded.positions, cloud.positions)  # bit-exact for f32 inputs
    assert np.abs(loaded.colors - cloud.colors).max() <= 0.5 / 255.0 + 1e-12
    np.testing.assert_array_equal(loaded.labels, cloud.labels)


def test_ascii_and_binary_agree(tmp_path, rng):
    cloud = f32_cloud(rng, n=200)
    pa, pb = tmp_path / "a.ply", tmp_path / "b.ply"
    save_ply(cloud, pa, encoding="ascii")
    save_ply(cloud, pb, encoding="binary-le")
    a, b = load_ply(pa), load_ply(pb)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.colors, b.colors)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_labels_declared_only_when_present(tmp_path, rng):
    labeled = f32_cloud(rng, n=5, labels=True)
    bare = f32_cloud(rng, n=5, labels=False)
    pl, pb = tmp_path / "l.ply", tmp_path / "b.ply"
    save_ply(labeled, pl, encoding="ascii")
    save_ply(bare, pb, encoding="ascii")
    assert "property uchar label" in pl.read_text()
    assert "property uchar label" not in pb.read_text()
    assert load_ply(pb).labels is None


def test_missing_required_property(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n"
    )
    with pytest.raises(MalformedPly):
        load_ply(path)


def test_truncated_binary_payload(tmp_path, rng):
    cloud = f32_cloud(rng, n=50)
    path = tmp_path / "trunc.ply"
    save_ply(cloud, path, encoding="binary-le")
    data = path.read_bytes()
    path.write_bytes(data[:-20])
    with pytest.raises(MalformedPly):
        load_ply(path)


def test_truncated_ascii_payload(tmp_path):
    path = tmp_path / "trunc.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n0 0 0 1 2 3\n"
    )
    with pytest.raises(MalformedPly):
        load_ply(path)


def test_big_endian_rejected(tmp_path):
    path = tmp_path / "be.ply"
    path.write_text(
        "ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    with pytest.raises(UnsupportedEncoding):
        load_ply(path)


def test_unknown_extra_property_skipped(tmp_path):
    path = tmp_path / "extra.ply"
    path.write_text(
        "ply\nformat ascii 1.0\ncomment generated elsewhere\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "property float confidence\n"
        "end_header\n1 2 3 10 20 30 0.5\n"
    )
    cloud = load_ply(path)
    assert len(cloud) == 1
    np.testing.assert_allclose(cloud.positions, [[1, 2, 3]])
