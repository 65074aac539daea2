import numpy as np
import pytest
from PIL import Image

from geopretrain.data.segmentation import SegmentationPair
from geopretrain.encoder import backbone_spec, fresh_generalist, load_checkpoint, save_checkpoint

TOY_CLASS_COLORS = np.array(
    [[200, 40, 40], [40, 200, 40], [40, 40, 200], [200, 200, 40]], dtype=np.float64)


def write_classification_folder(root, per_class=45, size=32, seed=7):
    """4-class folder dataset with distinct dominant colors plus noise."""
    rng = np.random.default_rng(seed)
    for k in range(len(TOY_CLASS_COLORS)):
        d = root / f"class_{k}"
        d.mkdir(parents=True)
        for i in range(per_class):
            img = TOY_CLASS_COLORS[k] + rng.normal(0, 25, size=(size, size, 3))
            Image.fromarray(img.clip(0, 255).astype(np.uint8)).save(d / f"{i:03d}.png")
    return root


def make_ssl_images(n=64, size=32, seed=11):
    """Smooth per-image color patterns for contrastive toy runs."""
    rng = np.random.default_rng(seed)
    images = []
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    for _ in range(n):
        chans = []
        for _ in range(3):
            f1, f2 = rng.uniform(0.5, 3, 2)
            p1, p2 = rng.uniform(0, 6, 2)
            chans.append(np.sin(2 * np.pi * f1 * xx + p1) + np.cos(2 * np.pi * f2 * yy + p2))
        img = np.stack(chans, -1)
        img = (img - img.min()) / (np.ptp(img) + 1e-9)
        images.append((img * 255).astype(np.uint8))
    return images


def make_color_pairs(n=20, size=128, block=64, seed=21):
    """Two-class segmentation pairs where per-pixel color identifies the class.

    Regions are constant-color blocks aligned to the /32 output grid, so a
    model that learns color -> class can segment them near-perfectly.
    """
    rng = np.random.default_rng(seed)
    colors = np.array([[30, 60, 200], [200, 180, 30]], dtype=np.float64)
    grid = size // block
    pairs = []
    for i in range(n):
        blocks = rng.integers(0, 2, size=(grid, grid))
        mask = np.kron(blocks, np.ones((block, block), dtype=np.int64))
        img = colors[mask] + rng.normal(0, 10, size=(size, size, 3))
        pairs.append(SegmentationPair(image=img.clip(0, 255).astype(np.uint8),
                                      mask=mask, source_id=f"toy{i}"))
    return pairs


def random_boxes(rng, n, width=128, height=128, lo=5, hi=40):
    out = []
    for _ in range(n):
        x0 = rng.uniform(0, width - hi)
        y0 = rng.uniform(0, height - hi)
        w, h = rng.uniform(lo, hi, 2)
        out.append([x0, y0, x0 + w, y0 + h])
    return np.array(out, dtype=np.float64).reshape(-1, 4)


@pytest.fixture(scope="session")
def toy_classification(tmp_path_factory):
    root = tmp_path_factory.mktemp("clsdata")
    return write_classification_folder(root)


@pytest.fixture(scope="session")
def tiny_generalist_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpts") / "generalist-tiny.ckpt"
    save_checkpoint(fresh_generalist(backbone_spec("tiny"), seed=1), path)
    return path


@pytest.fixture()
def tiny_generalist(tiny_generalist_path):
    return load_checkpoint(tiny_generalist_path)
