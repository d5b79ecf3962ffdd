import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from glyphhmm import oracle


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    """Small synthetic corpus in the dataset layout (3 characters, 8 samples)."""
    root = tmp_path_factory.mktemp("corpus")
    comps = [("corner", "gate"), ("gate", "ring"), ("rails", "trough")]
    oracle.emit_corpus(root, compositions=comps, samples_per_character=8, seed=11)
    return root


@pytest.fixture(scope="session")
def acceptance_root(tmp_path_factory):
    """The full 200-glyph corpus used by the implicit-segmentation criterion."""
    root = tmp_path_factory.mktemp("acceptance_corpus")
    oracle.emit_corpus(root, samples_per_character=20, jitter=(0, 2), seed=7)
    return root


def make_png_dataset(root, characters, samples_per_character, size=12, seed=0):
    """Tiny random binary PNG dataset with a manifest."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for cid in characters:
        cdir = root / cid
        cdir.mkdir()
        for i in range(samples_per_character):
            px = rng.random((size, size)) < 0.35
            px[size // 2, size // 2] = True
            arr = np.where(px, 0, 255).astype(np.uint8)
            Image.fromarray(arr, mode="L").save(cdir / f"{i:02d}.png")
    import json

    (root / "manifest.json").write_text(
        json.dumps(
            {
                "image_format": "png",
                "samples_per_character": samples_per_character,
                "characters": list(characters),
            }
        ),
        encoding="utf-8",
    )
    return root
