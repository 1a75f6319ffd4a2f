"""Dataset ingestion (CSV, IDX) and the bundled synthetic generators."""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BadMagic, CountMismatch, MissingColumn, ParseError, TruncatedFile

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Features ``x`` (n, d) and targets ``y``.

    Regression targets are min-max scaled with the training range, so the
    scaled training range is 1; ``y_min``/``y_max`` keep the raw values.
    """

    x: np.ndarray
    y: np.ndarray
    feature_mean: Optional[np.ndarray] = None
    feature_std: Optional[np.ndarray] = None
    y_min: Optional[float] = None
    y_max: Optional[float] = None

    def __len__(self):
        return len(self.x)

    @property
    def y_range(self) -> float:
        return 1.0

    def subset(self, idx) -> "Dataset":
        return replace(self, x=self.x[idx], y=self.y[idx])


def split_sizes(n: int, fractions: Sequence[float]) -> list:
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must be three non-negative numbers summing to 1")
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return [n_train, n_val, n - n_train - n_val]


def standardize_split(x, y, rng, fractions=(0.6, 0.2, 0.2), regression=True):
    """Shuffle, split, and normalize with training-split statistics only."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float if regression else int)
    perm = rng.permutation(len(x))
    n_train, n_val, _ = split_sizes(len(x), fractions)
    parts = np.split(perm, [n_train, n_train + n_val])
    tr = parts[0]
    mean = x[tr].mean(axis=0)
    std = np.maximum(x[tr].std(axis=0), STD_FLOOR)
    if regression:
        y_min, y_max = float(y[tr].min()), float(y[tr].max())
        span = max(y_max - y_min, STD_FLOOR)
        ys = (y - y_min) / span
    else:
        y_min = y_max = None
        ys = y
    out = []
    for idx in parts:
        out.append(Dataset((x[idx] - mean) / std, ys[idx], mean, std, y_min, y_max))
    return tuple(out)


def read_csv_matrix(path):
    """Header row plus numeric body; raises ParseError on malformed content."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        try:
            body.append([float(c) for c in row])
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: {exc}") from None
    data = np.asarray(body, dtype=float).reshape(-1, len(header))
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite values")
    return header, data


def load_csv(path, target_column, split_seed: int, split_fractions=(0.6, 0.2, 0.2), regression=True):
    """Load a numeric CSV and return ``(train, val, test)`` datasets."""
    from .numerics import make_rng

    header, data = read_csv_matrix(path)
    if isinstance(target_column, int):
        col = target_column
        if not -len(header) <= col < len(header):
            raise MissingColumn(target_column)
    else:
        if target_column not in header:
            raise MissingColumn(target_column)
        col = header.index(target_column)
    col %= len(header)
    y = data[:, col]
    x = np.delete(data, col, axis=1)
    return standardize_split(x, y, make_rng(split_seed), split_fractions, regression)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


# --- IDX (MNIST) -------------------------------------------------------------


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, path):
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: missing header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise BadMagic(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise TruncatedFile(f"{path}: truncated header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header_len])
    size = int(np.prod(dims))
    if len(raw) - header_len < size:
        raise TruncatedFile(f"{path}: expected {size} data bytes, found {len(raw) - header_len}")
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header_len)
    return data.reshape(dims)


def load_idx(images_path, labels_path, limit: Optional[int] = None) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    x = images.reshape(len(images), -1).astype(float) / 255.0
    return Dataset(x, labels.astype(int))


def write_idx(images_path, labels_path, images, labels) -> None:
    """Write uint8 images ``(n, rows, cols)`` and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


# --- synthetic and bundled data ---------------------------------------------


def heteroscedastic(n: int, rng, lo: float = -3.0, hi: float = 3.0):
    """``y = sin(x) + eps`` with noise std ``0.05 + 0.15 |x|``."""
    x = rng.uniform(lo, hi, n)
    y = np.sin(x) + rng.standard_normal(n) * (0.05 + 0.15 * np.abs(x))
    return x[:, None], y


def two_moons(n: int, noise: float, seed: int):
    from sklearn.datasets import make_moons

    x, y = make_moons(n_samples=n, noise=noise, random_state=int(seed) % (2**32))
    return x, y.astype(int)


def iris():
    from sklearn.datasets import load_iris

    d = load_iris()
    return np.asarray(d.data, dtype=float), np.asarray(d.target, dtype=int)


_FONT_FILES = (
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSans-Oblique.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono.ttf",
    "DejaVuSansMono-Bold.ttf",
    "STIXGeneral.ttf",
    "STIXGeneralBol.ttf",
    "STIXGeneralItalic.ttf",
)

DIGITS = "0123456789"
LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _fonts():
    import matplotlib

    root = Path(matplotlib.get_data_path()) / "fonts" / "ttf"
    return [str(root / f) for f in _FONT_FILES if (root / f).exists()]


def render_glyphs(labels, alphabet: str, rng, size: int = 28, lowercase_prob: float = 0.0) -> np.ndarray:
    """Render jittered 28x28 white-on-black glyphs ``alphabet[label]``.

    A desk-scale stand-in for handwritten digit/letter images: random font,
    size, rotation, shift and stroke width.
    """
    from PIL import Image, ImageDraw, ImageFilter, ImageFont

    fonts = _fonts()
    big = size * 3
    out = np.zeros((len(labels), size, size), dtype=np.uint8)
    cache = {}
    for i, lab in enumerate(labels):
        ch = alphabet[int(lab)]
        if lowercase_prob and rng.random() < lowercase_prob:
            ch = ch.lower()
        font_path = fonts[int(rng.integers(len(fonts)))]
        pt = int(rng.integers(int(big * 0.55), int(big * 0.8)))
        key = (font_path, pt)
        if key not in cache:
            cache[key] = ImageFont.truetype(font_path, pt)
        img = Image.new("L", (big, big), 0)
        draw = ImageDraw.Draw(img)
        box = draw.textbbox((0, 0), ch, font=cache[key])
        w, h = box[2] - box[0], box[3] - box[1]
        pos = ((big - w) / 2 - box[0], (big - h) / 2 - box[1])
        draw.text(pos, ch, fill=255, font=cache[key])
        width = int(rng.integers(0, 3))
        if width:
            img = img.filter(ImageFilter.MaxFilter(2 * width + 1))
        img = img.rotate(float(rng.uniform(-15, 15)), resample=Image.BILINEAR)
        dx, dy = (int(v) for v in rng.integers(-6, 7, 2))
        img = img.transform(img.size, Image.AFFINE, (1, 0, -dx, 0, 1, -dy))
        img = img.resize((size, size), Image.LANCZOS)
        out[i] = np.asarray(img, dtype=np.uint8)
    return out


def glyph_dataset(n: int, kind: str, rng):
    """``(images uint8 (n, 28, 28), labels)`` for ``kind`` "digits" or "letters".

    Letter labels run 1..26 as in EMNIST letters.
    """
    if kind == "digits":
        labels = rng.integers(0, 10, n)
        return render_glyphs(labels, DIGITS, rng), labels
    if kind == "letters":
        labels = rng.integers(0, 26, n)
        return render_glyphs(labels, LETTERS, rng, lowercase_prob=0.5), labels + 1
    raise ValueError(f"unknown glyph kind {kind!r}")
