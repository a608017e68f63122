"""Dataset ingestion, resizing, augmentation, synthetic data generation.

On-disk layout: ``<root>/images/<id>.ppm`` (binary P6), ``<root>/masks/
<id>.pgm`` (binary P5), and a ``list.txt`` of ids fixing iteration order.
Pixels are stored as bytes against maxval 255 and load as floats in
[0, 1]; masks additionally binarize at 128.

The synthetic generator draws one salient shape per image over a textured
background.  With probability ``hole_fraction`` the shape interior is
rendered with background statistics while the mask still covers it, so a
per-pixel classifier is pushed toward incomplete, holey predictions; the
annulus kind always has such an interior.  Every sample derives its own
random stream from (seed, index), so generation order cannot leak state
between samples.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import kernels


class PnmError(ValueError):
    """Base for unreadable PNM files."""


class PnmHeaderError(PnmError):
    """Magic number or header fields are not a binary P5/P6 header."""


class PnmMaxvalError(PnmError):
    """Header parses but the maxval is not 255."""


class PnmPayloadError(PnmError):
    """Header promises more pixel bytes than the file holds."""


@dataclass
class Sample:
    image: np.ndarray   # (H, W, 3) float64 in [0,1]
    mask: np.ndarray    # (H, W) uint8 in {0,1}
    id: str

    def validate(self):
        if self.image.shape[:2] != self.mask.shape:
            raise ValueError(
                f"image {self.image.shape[:2]} and mask {self.mask.shape} sizes differ")
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("mask must be binary")
        return self


@dataclass
class SyntheticSpec:
    count: int = 250
    size: int = 64
    seed: int = 0
    hole_fraction: float = 0.7
    shape_kinds: tuple = ("ellipse", "rectangle", "annulus")

    def validate(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1; got {self.count}")
        if self.size % 16 != 0:
            raise ValueError(f"size must be divisible by 16; got {self.size}")
        if not (0.0 <= self.hole_fraction <= 1.0):
            raise ValueError(f"hole_fraction must lie in [0,1]; got {self.hole_fraction}")
        bad = set(self.shape_kinds) - {"ellipse", "rectangle", "annulus"}
        if bad or not self.shape_kinds:
            raise ValueError(f"unknown shape kinds: {sorted(bad)}" if bad else "no shape kinds")
        return self


# -- PNM reading/writing ------------------------------------------------------

def _tokens(buf, start, n):
    """Read n whitespace-separated header tokens, honoring # comments.

    Returns (tokens, position just past the single whitespace byte that
    terminates the last token)."""
    toks = []
    pos = start
    while len(toks) < n:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        t = bytearray()
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            t += buf[pos : pos + 1]
            pos += 1
        if not t:
            raise PnmHeaderError("truncated header")
        toks.append(bytes(t))
        if len(toks) == n:
            if pos >= len(buf):
                raise PnmHeaderError("header ends without payload separator")
            pos += 1   # exactly one whitespace byte separates header and payload
    return toks, pos


def load_pnm(path):
    """Read a binary P5 (-> H×W) or P6 (-> H×W×3) file as floats in [0,1]."""
    with open(path, "rb") as f:
        buf = f.read()
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmHeaderError(f"{path}: not a binary P5/P6 file (magic {magic!r})")
    try:
        (w, h, maxval), pos = _tokens(buf, 2, 3)
        w, h, maxval = int(w), int(h), int(maxval)
    except PnmHeaderError:
        raise
    except ValueError:
        raise PnmHeaderError(f"{path}: non-numeric header fields") from None
    if w < 1 or h < 1:
        raise PnmHeaderError(f"{path}: bad dimensions {w}x{h}")
    if maxval != 255:
        raise PnmMaxvalError(f"{path}: unsupported maxval {maxval} (need 255)")
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    payload = buf[pos : pos + need]
    if len(payload) < need:
        raise PnmPayloadError(f"{path}: payload holds {len(payload)} of {need} bytes")
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 3:
        return arr.reshape(h, w, 3)
    return arr.reshape(h, w)


def load_mask(path):
    """Read a P5 file and binarize at 128/255."""
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"P6":
        raise PnmHeaderError(f"{path}: masks must be single-channel P5")
    v = load_pnm(path)
    return (v >= 128.0 / 255.0).astype(np.uint8)


def save_pnm(arr, path):
    """Write floats in [0,1] as binary P5 (2-d) or P6 (3-d), maxval 255."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        magic, h, w = b"P5", arr.shape[0], arr.shape[1]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic, h, w = b"P6", arr.shape[0], arr.shape[1]
    else:
        raise ValueError(f"expected (H,W) or (H,W,3); got {arr.shape}")
    body = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8).tobytes()
    with open(path, "wb") as f:
        f.write(magic + b"\n" + f"{w} {h}\n255\n".encode("ascii") + body)


# -- per-sample transforms ----------------------------------------------------

def resize_map(arr, th, tw):
    """Bilinear resize of an (H,W) or (H,W,C) float array."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[0], arr.shape[1]
    if (h, w) == (th, tw):
        return arr.copy()
    chans = arr[None, None] if arr.ndim == 2 else arr.transpose(2, 0, 1)[None]
    i0, i1, fi = kernels.bilinear_coeffs(h, th)
    j0, j1, fj = kernels.bilinear_coeffs(w, tw)
    out = kernels.bilinear_forward(np.ascontiguousarray(chans), i0, i1, fi, j0, j1, fj)
    if arr.ndim == 2:
        return out[0, 0]
    return np.ascontiguousarray(out[0].transpose(1, 2, 0))


def resize_bilinear(sample, target):
    """Resize image and mask to target×target; the mask re-binarizes at 0.5."""
    img = resize_map(sample.image, target, target)
    soft = resize_map(sample.mask.astype(np.float64), target, target)
    return Sample(img, (soft >= 0.5).astype(np.uint8), sample.id).validate()


def hflip(sample):
    """Mirror image and mask left-right, keeping them aligned."""
    return Sample(sample.image[:, ::-1].copy(), sample.mask[:, ::-1].copy(), sample.id)


# -- synthetic dataset --------------------------------------------------------

def _sample_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), index]))


def _shape_mask(rng, kind, size):
    """Filled-region mask plus the interior region eligible for hole texture.

    Geometry ranges keep the filled fraction inside [0.05, 0.6] for every
    draw (shapes are placed fully inside the frame)."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    if kind == "ellipse":
        a = rng.uniform(0.14, 0.38) * size
        b = rng.uniform(0.14, 0.38) * size
        a, b = max(a, b), min(a, b)
        ang = rng.uniform(0.0, np.pi)
        cy = rng.uniform(a, size - a)
        cx = rng.uniform(a, size - a)
        dy, dx = yy - cy, xx - cx
        ry = dy * np.cos(ang) - dx * np.sin(ang)
        rx = dy * np.sin(ang) + dx * np.cos(ang)
        r2 = (ry / b) ** 2 + (rx / a) ** 2
        filled = r2 <= 1.0
        interior = r2 <= 0.45
    elif kind == "rectangle":
        hh = rng.uniform(0.13, 0.38) * size
        hw = rng.uniform(0.13, 0.38) * size
        cy = rng.uniform(hh, size - hh)
        cx = rng.uniform(hw, size - hw)
        filled = (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
        interior = (np.abs(yy - cy) <= 0.62 * hh) & (np.abs(xx - cx) <= 0.62 * hw)
    elif kind == "annulus":
        r = rng.uniform(0.15, 0.38) * size
        cy = rng.uniform(r, size - r)
        cx = rng.uniform(r, size - r)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        filled = d2 <= r * r
        hole_r = r * rng.uniform(0.55, 0.75)
        interior = d2 <= hole_r * hole_r
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    return filled, interior


def _render(rng, spec, kind):
    size = spec.size
    filled, interior = _shape_mask(rng, kind, size)
    bg_base = rng.uniform(0.15, 0.45, 3)
    fg_base = rng.uniform(0.55, 0.9, 3)
    noise_sigma = 0.03
    img = bg_base + rng.normal(0.0, noise_sigma, (size, size, 3))
    obj = fg_base + rng.normal(0.0, noise_sigma, (size, size, 3))
    img = np.where(filled[..., None], obj, img)
    # hole: interior re-rendered from the background distribution, while
    # the mask still claims it, which is what elicits holey predictions
    has_hole = kind == "annulus" or rng.uniform() < spec.hole_fraction
    if has_hole:
        hole_tex = bg_base + rng.normal(0.0, noise_sigma, (size, size, 3))
        img = np.where(interior[..., None], hole_tex, img)
    return np.clip(img, 0.0, 1.0), filled.astype(np.uint8)


def generate_synthetic(spec):
    """Deterministic list of samples; same spec -> byte-identical output."""
    spec.validate()
    samples = []
    kinds = tuple(spec.shape_kinds)
    for idx in range(spec.count):
        rng = _sample_rng(spec.seed, idx)
        kind = kinds[int(rng.integers(len(kinds)))]
        img, mask = _render(rng, spec, kind)
        samples.append(Sample(img, mask, f"{idx:05d}").validate())
    return samples


# -- dataset directories ------------------------------------------------------

def save_dataset(samples, root):
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "masks"), exist_ok=True)
    ids = []
    for s in samples:
        save_pnm(s.image, os.path.join(root, "images", s.id + ".ppm"))
        save_pnm(s.mask.astype(np.float64), os.path.join(root, "masks", s.id + ".pgm"))
        ids.append(s.id)
    with open(os.path.join(root, "list.txt"), "w", encoding="utf-8") as f:
        f.write("".join(i + "\n" for i in ids))


def load_dataset(root):
    """Read samples back in list.txt order."""
    list_path = os.path.join(root, "list.txt")
    if not os.path.isfile(list_path):
        raise FileNotFoundError(f"{root}: missing list.txt")
    with open(list_path, "r", encoding="utf-8") as f:
        ids = [line.strip() for line in f if line.strip()]
    samples = []
    for sid in ids:
        img = load_pnm(os.path.join(root, "images", sid + ".ppm"))
        if img.ndim != 3:
            raise PnmHeaderError(f"{sid}: image must be 3-channel P6")
        mask = load_mask(os.path.join(root, "masks", sid + ".pgm"))
        samples.append(Sample(img, mask, sid).validate())
    return samples
