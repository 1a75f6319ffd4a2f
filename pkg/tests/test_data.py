import gzip
import struct

import numpy as np
import pytest

from stabprop import data
from stabprop.errors import BadMagic, CountMismatch, MissingColumn, ParseError, TruncatedFile


def write_rows(path, header, rows):
    path.write_text(",".join(header) + "\n" + "\n".join(",".join(str(v) for v in r) for r in rows) + "\n")


def test_csv_split_sizes_and_determinism(tmp_path):
    p = tmp_path / "d.csv"
    write_rows(p, ["a", "b", "y"], [[i, 2 * i + 1, i * i] for i in range(10)])
    tr, va, te = data.load_csv(p, "y", split_seed=3)
    assert (len(tr), len(va), len(te)) == (6, 2, 2)
    tr2, va2, te2 = data.load_csv(p, "y", split_seed=3)
    for a, b in [(tr, tr2), (va, va2), (te, te2)]:
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
    # train statistics only
    np.testing.assert_allclose(tr.x.mean(0), 0.0, atol=1e-12)
    assert tr.y.min() == 0.0 and tr.y.max() == 1.0
    assert tr.y_range == 1.0
    same = data.load_csv(p, -1, split_seed=3)[0]
    np.testing.assert_array_equal(same.y, tr.y)


def test_csv_constant_feature(tmp_path):
    p = tmp_path / "c.csv"
    write_rows(p, ["c", "x", "y"], [[5.0, i, i] for i in range(10)])
    tr, va, te = data.load_csv(p, "y", split_seed=0)
    for d in (tr, va, te):
        np.testing.assert_array_equal(d.x[:, 0], 0.0)
    assert tr.feature_std[0] == data.STD_FLOOR


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ParseError):
        data.load_csv(p, "b", 0)
    p.write_text("a,b\n1,x\n")
    with pytest.raises(ParseError):
        data.load_csv(p, "b", 0)
    p.write_text("")
    with pytest.raises(ParseError):
        data.load_csv(p, "b", 0)
    p.write_text("a,b\n1,2\n3,4\n")
    with pytest.raises(MissingColumn):
        data.load_csv(p, "z", 0)
    with pytest.raises(MissingColumn):
        data.load_csv(p, 5, 0)


def test_split_sizes_validation():
    assert data.split_sizes(10, (0.6, 0.2, 0.2)) == [6, 2, 2]
    with pytest.raises(ValueError):
        data.split_sizes(10, (0.5, 0.2, 0.2))


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (4, 28, 28), dtype=np.uint8)
    labels = np.array([3, 1, 4, 1], dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    data.write_idx(ip, lp, images, labels)
    return ip, lp, images, labels


def test_idx_round_trip(idx_pair):
    ip, lp, images, labels = idx_pair
    d = data.load_idx(ip, lp)
    assert d.x.shape == (4, 784)
    np.testing.assert_allclose(d.x, images.reshape(4, -1) / 255.0)
    np.testing.assert_array_equal(d.y, labels)
    assert data.load_idx(ip, lp, limit=2).x.shape == (2, 784)


def test_idx_header_bytes(idx_pair):
    ip, lp, _, _ = idx_pair
    assert ip.read_bytes()[:16] == struct.pack(">IIII", 0x803, 4, 28, 28)
    assert lp.read_bytes()[:8] == struct.pack(">II", 0x801, 4)


def test_idx_gzip(idx_pair, tmp_path):
    ip, lp, images, _ = idx_pair
    gz = tmp_path / "img.idx.gz"
    gz.write_bytes(gzip.compress(ip.read_bytes()))
    np.testing.assert_array_equal(data.load_idx(gz, lp).x, data.load_idx(ip, lp).x)


def test_idx_errors(idx_pair, tmp_path):
    ip, lp, images, labels = idx_pair
    with pytest.raises(BadMagic):
        data.load_idx(lp, lp)
    trunc = tmp_path / "t.idx"
    trunc.write_bytes(ip.read_bytes()[:100])
    with pytest.raises(TruncatedFile):
        data.load_idx(trunc, lp)
    trunc.write_bytes(ip.read_bytes()[:2])
    with pytest.raises(TruncatedFile):
        data.load_idx(trunc, lp)
    ip3, lp3 = tmp_path / "i3", tmp_path / "l3"
    data.write_idx(ip3, lp3, images[:3], labels[:3])
    with pytest.raises(CountMismatch):
        data.load_idx(ip, lp3)


def test_generators_deterministic():
    x1, y1 = data.heteroscedastic(50, np.random.default_rng(1))
    x2, y2 = data.heteroscedastic(50, np.random.default_rng(1))
    np.testing.assert_array_equal(y1, y2)
    assert x1.shape == (50, 1)
    a, la = data.two_moons(40, 0.1, 5)
    b, lb = data.two_moons(40, 0.1, 5)
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(la)) == {0, 1}
