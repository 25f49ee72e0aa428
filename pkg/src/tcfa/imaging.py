"""Image containers, PGM I/O, plaque band segmentation and rotation augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .kernels import UNREACHABLE, geodesic_distance


class Tissue(IntEnum):
    ADVENTITIA = 0
    LUMEN = 1
    PLAQUE = 2


class Region(IntEnum):
    ADVENTITIA = 0
    LUMEN = 1
    CAP = 2
    SUF1 = 3
    SUF2 = 4
    SUF3 = 5


class Label(IntEnum):
    NORMAL = 0
    TCFA = 1


PLAQUE_BANDS = (Region.CAP, Region.SUF1, Region.SUF2, Region.SUF3)

# grey codes used when masks are stored as PGM
TISSUE_CODES = {Tissue.ADVENTITIA: 0, Tissue.LUMEN: 85, Tissue.PLAQUE: 170}
REGION_CODES = {
    Region.ADVENTITIA: 0,
    Region.LUMEN: 85,
    Region.CAP: 120,
    Region.SUF1: 150,
    Region.SUF2: 190,
    Region.SUF3: 230,
}

# inclusive upper distance for CAP, SUF1, SUF2; anything further is SUF3
BAND_LIMITS = (2, 10, 20)

MIN_SIDE = 8


class PgmFormatError(ValueError):
    pass


def _check_square(arr: np.ndarray, what: str) -> None:
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{what} must be a square 2-D array, got shape {arr.shape}")
    if arr.shape[0] < MIN_SIDE:
        raise ValueError(f"{what} side {arr.shape[0]} is below the minimum of {MIN_SIDE}")


@dataclass(frozen=True, eq=False)
class GreyImage:
    """Square 8-bit greyscale frame; ``pixels[row, col]``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels)
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("intensities must lie in 0..255")
            px = px.astype(np.uint8)
        _check_square(px, "GreyImage")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class MaskImage:
    """Per-pixel tissue label (values of :class:`Tissue`)."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.ascontiguousarray(self.labels, dtype=np.uint8)
        _check_square(lab, "MaskImage")
        if lab.size and lab.max() > Tissue.PLAQUE:
            raise ValueError("mask labels must be ADVENTITIA, LUMEN or PLAQUE")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True, eq=False)
class RoiMask:
    """Mask with the plaque split into CAP/SUF1/SUF2/SUF3 (values of :class:`Region`)."""

    regions: np.ndarray

    def __post_init__(self):
        reg = np.ascontiguousarray(self.regions, dtype=np.uint8)
        _check_square(reg, "RoiMask")
        if reg.size and reg.max() > Region.SUF3:
            raise ValueError("unknown region code in RoiMask")
        reg.setflags(write=False)
        object.__setattr__(self, "regions", reg)

    @property
    def width(self) -> int:
        return self.regions.shape[1]

    @property
    def height(self) -> int:
        return self.regions.shape[0]

    def counts(self) -> dict[Region, int]:
        bc = np.bincount(self.regions.ravel(), minlength=len(Region))
        return {r: int(bc[r]) for r in Region}


@dataclass(frozen=True, eq=False)
class LabeledSample:
    image: GreyImage
    mask: MaskImage
    label: Label
    id: str

    def __post_init__(self):
        if self.image.pixels.shape != self.mask.labels.shape:
            raise ValueError(
                f"sample {self.id}: image {self.image.pixels.shape} and mask "
                f"{self.mask.labels.shape} differ in size"
            )
        object.__setattr__(self, "label", Label(self.label))


# --------------------------------------------------------------------------- PGM


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM with maxval 255 into a uint8 array."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmFormatError(f"{path}: truncated header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise PgmFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PgmFormatError(f"{path}: malformed header") from None
    if maxval != 255:
        raise PgmFormatError(f"{path}: maxval must be 255, got {maxval}")
    pos += 1  # single whitespace after maxval
    body = data[pos : pos + width * height]
    if len(body) != width * height:
        raise PgmFormatError(f"{path}: expected {width * height} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes())


def _decode(codes: np.ndarray, table: dict, path) -> np.ndarray:
    lut = np.full(256, 255, dtype=np.uint8)
    for value, code in table.items():
        lut[code] = value
    out = lut[codes]
    if (out == 255).any():
        bad = sorted(set(np.unique(codes[out == 255]).tolist()))
        raise PgmFormatError(f"{path}: unexpected mask code(s) {bad[:5]}")
    return out


def _encode(values: np.ndarray, table: dict) -> np.ndarray:
    lut = np.zeros(256, dtype=np.uint8)
    for value, code in table.items():
        lut[value] = code
    return lut[values]


def load_image(path) -> GreyImage:
    return GreyImage(read_pgm(path))


def save_image(path, image: GreyImage) -> None:
    write_pgm(path, image.pixels)


def load_mask(path) -> MaskImage:
    return MaskImage(_decode(read_pgm(path), TISSUE_CODES, path))


def save_mask(path, mask: MaskImage) -> None:
    write_pgm(path, _encode(mask.labels, TISSUE_CODES))


def load_roi(path) -> RoiMask:
    return RoiMask(_decode(read_pgm(path), REGION_CODES, path))


def save_roi(path, roi: RoiMask) -> None:
    write_pgm(path, _encode(roi.regions, REGION_CODES))


# ------------------------------------------------------------------ segmentation


def lumen_distance_map(mask: MaskImage) -> np.ndarray:
    """Geodesic 8-connected hop count from the lumen, walking only through plaque.

    Returns an int32 array shaped like the mask: -1 on non-plaque pixels,
    ``UNREACHABLE`` on plaque pixels with no plaque path to the lumen.
    """
    if not isinstance(mask, MaskImage):
        raise TypeError("lumen_distance_map expects a MaskImage")
    return geodesic_distance(mask.labels, int(Tissue.LUMEN), int(Tissue.PLAQUE))


def bands_from_distance(labels: np.ndarray, dist: np.ndarray) -> np.ndarray:
    regions = np.where(labels == Tissue.LUMEN, Region.LUMEN, Region.ADVENTITIA).astype(np.uint8)
    plaque = labels == Tissue.PLAQUE
    cap, suf1, suf2 = BAND_LIMITS
    regions[plaque] = Region.SUF3
    regions[plaque & (dist <= suf2)] = Region.SUF2
    regions[plaque & (dist <= suf1)] = Region.SUF1
    regions[plaque & (dist <= cap)] = Region.CAP
    return regions


def precise_roi_segmentation(mask: MaskImage) -> RoiMask:
    dist = lumen_distance_map(mask)
    return RoiMask(bands_from_distance(mask.labels, dist))


# ------------------------------------------------------------------ augmentation

ROTATION_ANGLES = tuple(range(30, 360, 30))


def _check_angle(degrees) -> int:
    if isinstance(degrees, bool) or int(degrees) != degrees:
        raise ValueError(f"rotation angle must be an integer multiple of 30, got {degrees!r}")
    degrees = int(degrees)
    if degrees not in ROTATION_ANGLES:
        raise ValueError(f"rotation angle must be a nonzero multiple of 30 below 360, got {degrees}")
    return degrees


def _rotation_coords(side: int, degrees: int) -> np.ndarray:
    # counter-clockwise as displayed; sample the source at the inverse rotation
    theta = math.radians(degrees)
    cos, sin = math.cos(theta), math.sin(theta)
    centre = (side - 1) / 2.0
    r, c = np.mgrid[0:side, 0:side].astype(np.float64)
    x = c - centre
    y = centre - r
    xs = x * cos + y * sin
    ys = -x * sin + y * cos
    return np.stack([centre - ys, xs + centre])


def _rotate_array(arr: np.ndarray, degrees: int, order: int) -> np.ndarray:
    degrees = _check_angle(degrees)
    if degrees % 90 == 0:
        return np.ascontiguousarray(np.rot90(arr, degrees // 90))
    coords = _rotation_coords(arr.shape[0], degrees)
    out = map_coordinates(arr.astype(np.float64), coords, order=order, mode="constant", cval=0.0)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def rotate_image(image: GreyImage, degrees: int) -> GreyImage:
    """Rotate about the frame centre; bilinear with zero fill off the right angles."""
    return GreyImage(_rotate_array(image.pixels, degrees, order=1))


def rotate_mask(mask: MaskImage, degrees: int) -> MaskImage:
    """Nearest-neighbour label rotation; pixels rotated in from outside become ADVENTITIA."""
    return MaskImage(_rotate_array(mask.labels, degrees, order=0))


def augmentation_count(n_normal: int, n_tcfa: int) -> int:
    ratio = n_normal / n_tcfa
    return max(0, min(len(ROTATION_ANGLES), math.floor(ratio + 0.5) - 1))


def augment_minority(samples: list[LabeledSample], seed: int) -> list[LabeledSample]:
    """Add rotated TCFA copies until the classes are roughly balanced.

    Each TCFA sample gets ``k`` copies at distinct random multiples of 30
    degrees; copies follow their source in the output list.
    """
    n_tcfa = sum(1 for s in samples if s.label == Label.TCFA)
    n_normal = len(samples) - n_tcfa
    if n_tcfa == 0 or n_normal == 0:
        raise ValueError("augmentation needs at least one sample of each class")
    k = augmentation_count(n_normal, n_tcfa)
    rng = np.random.default_rng(seed)
    out = []
    for s in samples:
        out.append(s)
        if s.label != Label.TCFA or k == 0:
            continue
        angles = rng.choice(ROTATION_ANGLES, size=k, replace=False)
        for deg in angles:
            deg = int(deg)
            out.append(
                LabeledSample(
                    image=rotate_image(s.image, deg),
                    mask=rotate_mask(s.mask, deg),
                    label=s.label,
                    id=f"{s.id}_rot{deg:03d}",
                )
            )
    return out
