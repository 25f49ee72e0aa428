"""Synthetic IVUS-like vessel phantoms with a planted TCFA signature.

Each phantom is a noisy lumen contour inside an eccentric plaque annulus
inside adventitia. TCFA phantoms get extra dark (necrotic-core-like) pixels in
the CAP and SUF1 bands, a few extra bright SUF1 pixels, and a higher plaque
burden (narrower lumen, thicker plaque).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import GreyImage, Label, LabeledSample, MaskImage, Region, Tissue, bands_from_distance, lumen_distance_map

DARK_RANGE = (0, 30)
BRIGHT_RANGE = (141, 180)


@dataclass(frozen=True)
class PhantomConfig:
    side: int = 64
    size: int = 1100
    tcfa_fraction: float = 1 / 11
    center_jitter: float = 0.02  # fractions of the side length
    lumen_radius: tuple[float, float] = (0.08, 0.12)
    plaque_thickness: tuple[float, float] = (0.13, 0.18)
    eccentricity: tuple[float, float] = (0.0, 0.25)
    aspect: tuple[float, float] = (0.85, 1.0)
    contour_noise: float = 0.06
    lumen_intensity: tuple[float, float] = (55.0, 18.0)  # mean, sd
    plaque_intensity: tuple[float, float] = (140.0, 28.0)
    adventitia_intensity: tuple[float, float] = (190.0, 25.0)
    base_dark: float = 0.02  # dark-pixel probability in CAP/SUF1 for every phantom
    strength: float = 0.1  # TCFA signature strength
    burden_gain: float = 2.0  # TCFA lumen radius / b and plaque thickness * b, b = 1 + burden_gain * strength
    bright_gain: float = 1.0  # bright SUF1 probability is bright_gain * strength * u
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.tcfa_fraction < 1:
            raise ValueError("TCFA fraction must lie strictly between 0 and 1")
        if self.strength < 0 or self.base_dark < 0:
            raise ValueError("signature strength and base dark rate must be nonnegative")
        if self.base_dark + 1.5 * self.strength > 1:
            raise ValueError("dark-pixel probability would exceed 1")
        lo, hi = self.lumen_radius
        tlo, thi = self.plaque_thickness
        if not 0 < lo <= hi or not 0 < tlo <= thi:
            raise ValueError("radius and thickness ranges must be positive and ordered")
        if not 0 < self.aspect[0] <= self.aspect[1] <= 1:
            raise ValueError("aspect range must lie in (0, 1]")
        # harmonics 2..4 add at most noise * (1/2 + 1/3 + 1/4) of the radius
        b = 1 + self.burden_gain * self.strength
        lumen = hi * (1 + 13 / 12 * self.contour_noise)
        wall = thi * (1 + self.eccentricity[1])
        outer = max(lumen + wall, lumen / b + wall * b)
        reach = self.center_jitter + outer / self.aspect[0]
        if reach * self.side >= self.side / 2 - 1:
            raise ValueError(
                f"geometry reaches {reach * self.side:.1f} px from the centre, "
                f"beyond the {self.side / 2 - 1:.1f} px frame"
            )
        if self.side < 8:
            raise ValueError("phantom side must be at least 8")


def tcfa_indices(cfg: PhantomConfig) -> np.ndarray:
    n_tcfa = math.floor(cfg.tcfa_fraction * cfg.size + 0.5)
    if n_tcfa < 1 or n_tcfa >= cfg.size:
        raise ValueError(f"corpus of {cfg.size} with fraction {cfg.tcfa_fraction} leaves a class empty")
    perm = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0])).permutation(cfg.size)
    return np.sort(perm[:n_tcfa])


def label_of(cfg: PhantomConfig, index: int) -> Label:
    return Label.TCFA if index in set(tcfa_indices(cfg).tolist()) else Label.NORMAL


def _contour(rng, phi, base, noise):
    r = np.full_like(phi, base)
    for k in (2, 3, 4):
        r += base * noise / k * rng.uniform(-1, 1) * np.cos(k * phi + rng.uniform(0, 2 * np.pi))
    return r


def _draw(rng, n, mean_sd):
    mean, sd = mean_sd
    return np.clip(np.rint(rng.normal(mean, sd, n)), 0, 255)


def generate_phantom(cfg: PhantomConfig, index: int, label=None) -> LabeledSample:
    if label is None:
        label = label_of(cfg, index)
    label = Label(label)
    tcfa = label == Label.TCFA
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, index]))
    s = cfg.side
    cy, cx = (s - 1) / 2 + rng.uniform(-1, 1, 2) * cfg.center_jitter * s
    r, c = np.mgrid[0:s, 0:s].astype(np.float64)
    dy, dx = r - cy, c - cx
    phi = np.arctan2(dy, dx)
    tilt = rng.uniform(0, np.pi)
    aspect = rng.uniform(*cfg.aspect)
    # elliptical stretch: compress one axis so contours are ellipses
    u = dx * np.cos(tilt) + dy * np.sin(tilt)
    v = (-dx * np.sin(tilt) + dy * np.cos(tilt)) / aspect
    rho = np.hypot(u, v)
    phi = np.arctan2(v, u)

    burden = 1 + cfg.burden_gain * cfg.strength if tcfa else 1.0
    r_lumen = _contour(rng, phi, rng.uniform(*cfg.lumen_radius) * s / burden, cfg.contour_noise)
    thick = rng.uniform(*cfg.plaque_thickness) * s * burden
    ecc = rng.uniform(*cfg.eccentricity)
    t_phi = thick * (1 + ecc * np.cos(phi - rng.uniform(0, 2 * np.pi)))
    labels = np.full((s, s), Tissue.ADVENTITIA, dtype=np.uint8)
    labels[rho < r_lumen + t_phi] = Tissue.PLAQUE
    labels[rho < r_lumen] = Tissue.LUMEN
    mask = MaskImage(labels)

    regions = bands_from_distance(mask.labels, lumen_distance_map(mask))
    px = np.empty(s * s)
    flat = regions.ravel()
    for reg, dist in (
        (Region.LUMEN, cfg.lumen_intensity),
        (Region.ADVENTITIA, cfg.adventitia_intensity),
    ):
        sel = flat == reg
        px[sel] = _draw(rng, int(sel.sum()), dist)
    plaque = flat >= Region.CAP
    px[plaque] = _draw(rng, int(plaque.sum()), cfg.plaque_intensity)

    u_sig = rng.uniform(0.5, 1.5)
    p_dark = cfg.base_dark + (cfg.strength * u_sig if tcfa else 0.0)
    p_bright = cfg.bright_gain * cfg.strength * u_sig if tcfa else 0.0
    near = (flat == Region.CAP) | (flat == Region.SUF1)
    near_idx = np.flatnonzero(near)
    roll = rng.random(near_idx.size)
    dark = near_idx[roll < p_dark]
    px[dark] = rng.integers(DARK_RANGE[0], DARK_RANGE[1] + 1, dark.size)
    suf1 = flat[near_idx] == Region.SUF1
    bright = near_idx[(roll >= p_dark) & (roll < p_dark + p_bright) & suf1]
    px[bright] = rng.integers(BRIGHT_RANGE[0], BRIGHT_RANGE[1] + 1, bright.size)

    image = GreyImage(px.reshape(s, s).astype(np.uint8))
    return LabeledSample(image=image, mask=mask, label=label, id=f"ph{index:05d}")


@dataclass(frozen=True)
class ManifestRow:
    id: str
    label: int
    seed: int
    index: int


def generate_corpus(cfg: PhantomConfig, threads: int = 1):
    """Return ``(samples, manifest)`` for the whole configured corpus."""
    if cfg.size < 10:
        raise ValueError("corpus size must be at least 10")
    tcfa = set(tcfa_indices(cfg).tolist())

    def make(i):
        return generate_phantom(cfg, i, Label.TCFA if i in tcfa else Label.NORMAL)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            samples = list(pool.map(make, range(cfg.size)))
    else:
        samples = [make(i) for i in range(cfg.size)]
    manifest = [ManifestRow(s.id, int(s.label), cfg.seed, i) for i, s in enumerate(samples)]
    return samples, manifest
