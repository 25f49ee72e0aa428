import numpy as np
import pytest

from oracles import oracle_regions, random_mask
from tcfa.imaging import (
    GreyImage,
    Label,
    LabeledSample,
    MaskImage,
    PgmFormatError,
    Region,
    RoiMask,
    Tissue,
    augment_minority,
    augmentation_count,
    load_image,
    load_mask,
    load_roi,
    lumen_distance_map,
    precise_roi_segmentation,
    read_pgm,
    rotate_image,
    rotate_mask,
    save_image,
    save_mask,
    save_roi,
    write_pgm,
)
from tcfa.kernels import UNREACHABLE


def test_five_by_five_single_lumen():
    labels = np.full((5, 5), Tissue.PLAQUE, np.uint8)
    labels[2, 2] = Tissue.LUMEN
    expect = np.array(
        [[2, 2, 2, 2, 2],
         [2, 1, 1, 1, 2],
         [2, 1, -1, 1, 2],
         [2, 1, 1, 1, 2],
         [2, 2, 2, 2, 2]]
    )
    # 5x5 is below the minimum side, so pad it into an 8x8 adventitia frame
    big = np.zeros((8, 8), np.uint8)
    big[:5, :5] = labels
    d = lumen_distance_map(MaskImage(big))[:5, :5]
    assert (d == expect).all()


def test_no_plaque_gives_empty_map():
    labels = np.zeros((8, 8), np.uint8)
    labels[3:5, 3:5] = Tissue.LUMEN
    d = lumen_distance_map(MaskImage(labels))
    assert (d == -1).all()


def test_unreachable_plaque_goes_to_suf3():
    labels = np.zeros((10, 10), np.uint8)
    labels[1, 1] = Tissue.LUMEN
    labels[1, 2] = Tissue.PLAQUE
    labels[8, 8] = Tissue.PLAQUE  # island, no plaque path to the lumen
    d = lumen_distance_map(MaskImage(labels))
    assert d[1, 2] == 1 and d[8, 8] == UNREACHABLE
    roi = precise_roi_segmentation(MaskImage(labels))
    assert roi.regions[1, 2] == Region.CAP and roi.regions[8, 8] == Region.SUF3


def test_band_edges_on_a_strip():
    labels = np.zeros((30, 30), np.uint8)
    labels[0, :] = Tissue.PLAQUE
    labels[0, 0] = Tissue.LUMEN
    roi = precise_roi_segmentation(MaskImage(labels)).regions[0]
    assert roi[1] == roi[2] == Region.CAP
    assert roi[3] == roi[10] == Region.SUF1
    assert roi[11] == roi[15] == roi[20] == Region.SUF2
    assert roi[21] == roi[29] == Region.SUF3


@pytest.mark.parametrize("seed", range(20))
def test_segmentation_matches_bfs_oracle(seed):
    rng = np.random.default_rng(seed)
    labels = random_mask(rng, int(rng.integers(8, 65)))
    roi = precise_roi_segmentation(MaskImage(labels))
    assert (roi.regions == oracle_regions(labels)).all()


def test_partition_and_passthrough():
    rng = np.random.default_rng(11)
    for _ in range(100):
        labels = random_mask(rng, 32)
        roi = precise_roi_segmentation(MaskImage(labels)).regions
        plaque = labels == Tissue.PLAQUE
        assert ((roi >= Region.CAP) == plaque).all()
        assert (roi[labels == Tissue.LUMEN] == Region.LUMEN).all()
        assert (roi[labels == Tissue.ADVENTITIA] == Region.ADVENTITIA).all()


def test_shrinking_lumen_never_decreases_distance():
    rng = np.random.default_rng(5)
    for _ in range(30):
        labels = random_mask(rng, 40)
        lumen = np.argwhere(labels == Tissue.LUMEN)
        smaller = labels.copy()
        drop = lumen[rng.random(len(lumen)) < 0.5]
        smaller[drop[:, 0], drop[:, 1]] = Tissue.ADVENTITIA
        if not (smaller == Tissue.LUMEN).any():
            continue
        before = lumen_distance_map(MaskImage(labels)).astype(np.int64)
        after = lumen_distance_map(MaskImage(smaller)).astype(np.int64)
        plaque = labels == Tissue.PLAQUE
        assert (after[plaque] >= before[plaque]).all()


# ---------------------------------------------------------------- validation


def test_types_reject_bad_shapes():
    with pytest.raises(ValueError):
        GreyImage(np.zeros((8, 9), np.uint8))
    with pytest.raises(ValueError):
        GreyImage(np.zeros((4, 4), np.uint8))
    with pytest.raises(ValueError):
        MaskImage(np.full((8, 8), 7, np.uint8))
    with pytest.raises(ValueError):
        LabeledSample(GreyImage(np.zeros((8, 8), np.uint8)), MaskImage(np.zeros((10, 10), np.uint8)), Label.NORMAL, "x")


def test_images_are_read_only():
    im = GreyImage(np.zeros((8, 8), np.uint8))
    with pytest.raises(ValueError):
        im.pixels[0, 0] = 1


# ----------------------------------------------------------------------- PGM


def test_pgm_round_trips(tmp_path):
    rng = np.random.default_rng(0)
    img = GreyImage(rng.integers(0, 256, (16, 16), dtype=np.uint8))
    save_image(tmp_path / "a.pgm", img)
    assert (load_image(tmp_path / "a.pgm").pixels == img.pixels).all()
    mask = MaskImage(random_mask(rng, 16))
    save_mask(tmp_path / "m.pgm", mask)
    assert (load_mask(tmp_path / "m.pgm").labels == mask.labels).all()
    roi = precise_roi_segmentation(mask)
    save_roi(tmp_path / "r.pgm", roi)
    assert (load_roi(tmp_path / "r.pgm").regions == roi.regions).all()


def test_mask_codes_on_disk(tmp_path):
    labels = np.zeros((8, 8), np.uint8)
    labels[0, 0], labels[0, 1] = Tissue.LUMEN, Tissue.PLAQUE
    save_mask(tmp_path / "m.pgm", MaskImage(labels))
    raw = read_pgm(tmp_path / "m.pgm")
    assert raw[0, 0] == 85 and raw[0, 1] == 170 and raw[0, 2] == 0


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n8 8\n255\n" + bytes(range(64)))
    assert read_pgm(p)[7, 7] == 63


@pytest.mark.parametrize(
    "blob",
    [b"P2\n8 8\n255\n" + bytes(64), b"P5\n8 8\n65535\n" + bytes(128), b"P5\n8 8\n255\n" + bytes(10), b"P5\n8"],
)
def test_pgm_parse_errors(tmp_path, blob):
    p = tmp_path / "bad.pgm"
    p.write_bytes(blob)
    with pytest.raises(PgmFormatError):
        read_pgm(p)


def test_unknown_mask_code_is_an_error(tmp_path):
    px = np.zeros((8, 8), np.uint8)
    px[3, 3] = 99
    write_pgm(tmp_path / "m.pgm", px)
    with pytest.raises(PgmFormatError):
        load_mask(tmp_path / "m.pgm")
    with pytest.raises(PgmFormatError):
        load_roi(tmp_path / "m.pgm")


# ------------------------------------------------------------------ rotation


def test_rotate_180_is_exact_permutation():
    rng = np.random.default_rng(1)
    px = rng.integers(0, 256, (12, 12), dtype=np.uint8)
    out = rotate_image(GreyImage(px), 180).pixels
    assert (out == px[::-1, ::-1]).all()


def test_four_quarter_turns_are_identity():
    rng = np.random.default_rng(2)
    im = GreyImage(rng.integers(0, 256, (10, 10), dtype=np.uint8))
    out = im
    for _ in range(4):
        out = rotate_image(out, 90)
    assert (out.pixels == im.pixels).all()


@pytest.mark.parametrize("deg", [90, 180, 270])
def test_right_angles_preserve_intensity_multiset(deg):
    rng = np.random.default_rng(deg)
    px = rng.integers(0, 256, (9, 9), dtype=np.uint8)
    out = rotate_image(GreyImage(px), deg).pixels
    assert (np.sort(out, axis=None) == np.sort(px, axis=None)).all()


def test_bright_pixel_follows_rotation_matrix():
    px = np.zeros((512, 512), np.uint8)
    px[356, 256] = 255
    out = rotate_image(GreyImage(px), 30).pixels
    c = 255.5
    # counter-clockwise on screen: row axis points down
    t = np.deg2rad(30)
    dr, dc = 356 - c, 256 - c
    c_exp = c + dc * np.cos(t) + dr * np.sin(t)
    r_exp = c - dc * np.sin(t) + dr * np.cos(t)
    r, col = np.unravel_index(np.argmax(out), out.shape)
    assert abs(r - r_exp) <= 1 and abs(col - c_exp) <= 1


def test_invalid_angles():
    im = GreyImage(np.zeros((8, 8), np.uint8))
    for bad in (0, 45, 360, -30):
        with pytest.raises(ValueError):
            rotate_image(im, bad)


def test_mask_rotation_stays_categorical():
    rng = np.random.default_rng(4)
    mask = MaskImage(random_mask(rng, 32))
    out = rotate_mask(mask, 30).labels
    assert set(np.unique(out).tolist()) <= {0, 1, 2}


# -------------------------------------------------------------- augmentation


def _sample(i, label, side=16):
    rng = np.random.default_rng(i)
    return LabeledSample(GreyImage(rng.integers(0, 256, (side, side), dtype=np.uint8)),
                         MaskImage(random_mask(rng, side)), Label(label), f"s{i}")


def test_augmentation_count_rule():
    assert augmentation_count(1000, 100) == 9
    assert augmentation_count(50, 50) == 0
    assert augmentation_count(10_000, 10) == 11


def test_augment_balances_classes():
    samples = [_sample(i, 0) for i in range(100)] + [_sample(100 + i, 1) for i in range(10)]
    out = augment_minority(samples, seed=3)
    tcfa = [s for s in out if s.label == Label.TCFA]
    assert len(tcfa) == 100 and len(out) == 200
    assert [s for s in out if s.label == Label.NORMAL] == samples[:100]
    rot = [s.id for s in tcfa if "_rot" in s.id and s.id.startswith("s100_")]
    assert len(rot) == 9 and len(set(rot)) == 9


def test_augment_is_deterministic_and_noop_when_balanced():
    samples = [_sample(i, i % 2) for i in range(6)]
    assert augment_minority(samples, 1) == samples
    uneven = [_sample(i, 0) for i in range(8)] + [_sample(9, 1)]
    a, b = augment_minority(uneven, 7), augment_minority(uneven, 7)
    assert [s.id for s in a] == [s.id for s in b]
    assert all((x.image.pixels == y.image.pixels).all() for x, y in zip(a, b))
    with pytest.raises(ValueError):
        augment_minority([_sample(0, 0)], 1)


def test_roi_counts():
    labels = np.zeros((8, 8), np.uint8)
    labels[0, 0] = Tissue.LUMEN
    labels[0, 1:4] = Tissue.PLAQUE
    c = precise_roi_segmentation(MaskImage(labels)).counts()
    assert c[Region.CAP] == 2 and c[Region.SUF1] == 1 and c[Region.LUMEN] == 1
    assert isinstance(precise_roi_segmentation(MaskImage(labels)), RoiMask)
