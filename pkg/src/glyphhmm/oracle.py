"""Independent brute-force references and synthetic data with known truth.

Everything here is deliberately naive: exhaustive path enumeration instead of
dynamic programming, nested loops instead of vectorization. These serve as
oracles for the fast implementations and as generators for acceptance runs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import BinaryImage
from .hmm import CompositeHMM, _flatten

LOG_2PI = math.log(2.0 * math.pi)


class TooLarge(Exception):
    pass


def _log_emission(mixture, frame) -> float:
    # naive linear-space mixture sum, log taken once at the end
    total = 0.0
    for g in range(mixture.n_components):
        quad = 0.0
        norm = 1.0
        for k in range(mixture.dimension):
            var = mixture.variances[g, k]
            quad += (frame[k] - mixture.means[g, k]) ** 2 / var
            norm *= 2.0 * math.pi * var
        total += mixture.weights[g] * math.exp(-0.5 * quad) / math.sqrt(norm)
    return math.log(total) if total > 0 else -math.inf


def _legal_paths(n_states: int, T: int):
    # a monotone 0..N-1 path is a choice of N-1 advance times among T-1 steps
    for advances in itertools.combinations(range(1, T), n_states - 1):
        path = np.zeros(T, dtype=np.int64)
        for t in advances:
            path[t:] += 1
        yield path


def enumerate_paths(model, obs, limit: int = 10**6):
    """Exhaustive alignment enumeration.

    Returns (log sum over paths, log max over paths, argmax path). Paths run
    entry -> state 0 ... state N-1 -> exit; emission and transition terms are
    all included, mirroring the forward/Viterbi contract.
    """
    frames = np.asarray(getattr(obs, "frames", obs), dtype=np.float64)
    mixtures, log_self, log_next, _, _ = _flatten(model)
    T, N = frames.shape[0], len(mixtures)
    if T < N:
        return -math.inf, -math.inf, None
    if math.comb(T - 1, N - 1) > limit:
        raise TooLarge(f"{math.comb(T - 1, N - 1)} legal paths exceed the {limit} guard")

    log_b = [[_log_emission(mixtures[j], frames[t]) for j in range(N)] for t in range(T)]

    best_lp, best_path, lse_max, lse_sum = -math.inf, None, -math.inf, 0.0
    terms = []
    for path in _legal_paths(N, T):
        lp = 0.0
        for t in range(T):
            lp += log_b[t][path[t]]
            if t + 1 < T:
                lp += log_self[path[t]] if path[t + 1] == path[t] else log_next[path[t]]
        lp += log_next[N - 1]  # exit
        terms.append(lp)
        if lp > best_lp:
            best_lp, best_path = lp, path
    m = max(terms)
    if not math.isfinite(m):
        return -math.inf, -math.inf, best_path
    total = m + math.log(sum(math.exp(x - m) for x in terms))
    return total, best_lp, best_path


def sample_sequence(model, seed: int):
    """Ancestral sampling; returns (frames array, state path array)."""
    mixtures, _, _, _, _ = _flatten(model)
    self_probs = np.concatenate(
        [p.self_probs for p in (model.parts if isinstance(model, CompositeHMM) else [model])]
    )
    rng = np.random.default_rng(seed)
    frames, path = [], []
    state = 0
    n_states = len(mixtures)
    while True:
        mixture = mixtures[state]
        g = rng.choice(mixture.n_components, p=mixture.weights / mixture.weights.sum())
        frames.append(rng.normal(mixture.means[g], np.sqrt(mixture.variances[g])))
        path.append(state)
        if rng.random() < self_probs[state]:
            continue
        if state == n_states - 1:
            break
        state += 1
    return np.array(frames), np.array(path, dtype=np.int64)


def _stroke(height=32, width=16, thickness=3):
    return np.zeros((height, width), dtype=bool)


def _shape_gate(h=32, w=16, t=3):
    # top bar plus a centered vertical stroke; spans the full stamp box
    px = _stroke(h, w, t)
    px[:t, :] = True
    px[:, (w - t) // 2 : (w - t) // 2 + t] = True
    px[h - 1, :] = True
    return px


def _shape_corner(h=32, w=16, t=3):
    px = _stroke(h, w, t)
    px[:, :t] = True
    px[h - t :, :] = True
    px[0, w - 1] = True
    return px


def _shape_trough(h=32, w=16, t=3):
    px = _stroke(h, w, t)
    px[:, :t] = True
    px[:, w - t :] = True
    px[h - t :, :] = True
    return px


def _shape_ring(h=32, w=16, t=3):
    px = _stroke(h, w, t)
    px[:t, :] = True
    px[h - t :, :] = True
    px[:, :t] = True
    px[:, w - t :] = True
    return px


def _shape_rails(h=32, w=16, t=3):
    px = _stroke(h, w, t)
    px[:, :t] = True
    px[:, w - t :] = True
    rows = slice((h - t) // 2, (h - t) // 2 + t)
    px[rows, :] = True
    px[0, :] = True
    px[h - 1, :] = True
    return px


# five axis-aligned primitive stamps; every stamp fills its bounding box so
# junctions between pasted stamps are tight and boundary truth is well defined
PRIMITIVE_SHAPES = {
    "gate": _shape_gate(),
    "corner": _shape_corner(),
    "trough": _shape_trough(),
    "ring": _shape_ring(),
    "rails": _shape_rails(),
}


@dataclass(frozen=True)
class SyntheticGlyphSpec:
    composition: tuple  # ordered shape ids
    jitter: tuple = (0, 2)  # inclusive horizontal gap range between stamps
    seed: int = 0
    shapes: dict = None

    def resolved_shapes(self):
        return self.shapes if self.shapes is not None else PRIMITIVE_SHAPES


def compose_glyph(spec: SyntheticGlyphSpec):
    """Paste stamps left to right with jittered gaps.

    Returns (BinaryImage, junction truth). Junction i is the exact pixel pair
    (column past the end of stamp i, first column of stamp i+1); the two
    coincide at zero jitter and bracket the gap otherwise.
    """
    shapes = spec.resolved_shapes()
    stamps = [np.asarray(shapes[sid], dtype=bool) for sid in spec.composition]
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.jitter
    gaps = [int(rng.integers(lo, hi + 1)) for _ in stamps[1:]]

    height = max(s.shape[0] for s in stamps)
    width = sum(s.shape[1] for s in stamps) + sum(gaps)
    if width < 1:
        raise ValueError("composed glyph has no width")
    canvas = np.zeros((height, width), dtype=bool)

    x, boundaries = 0, []
    for i, stamp in enumerate(stamps):
        if i > 0:
            boundaries.append((x, x + gaps[i - 1]))
            x += gaps[i - 1]
        top = (height - stamp.shape[0]) // 2
        canvas[top : top + stamp.shape[0], x : x + stamp.shape[1]] |= stamp
        x += stamp.shape[1]
    return BinaryImage(canvas), tuple(boundaries)


def default_compositions():
    """Ten 2-part compositions covering all five primitive shapes."""
    ids = sorted(PRIMITIVE_SHAPES)
    pairs = []
    for k in (1, 2):
        for i, a in enumerate(ids):
            pairs.append((a, ids[(i + k) % len(ids)]))
    return pairs[:10]


def emit_corpus(
    out_dir,
    compositions=None,
    samples_per_character: int = 20,
    jitter=(0, 2),
    seed: int = 0,
):
    """Write a synthetic corpus in the dataset layout, with truth sidecars.

    Each composition becomes one "character"; sample images land in
    ``out_dir/<character>/<index>.png`` with a ``truth.json`` sidecar per
    character recording the exact junction columns.
    """
    from PIL import Image

    if compositions is None:
        compositions = default_compositions()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    characters = ["_".join(comp) for comp in compositions]
    schema_lines = ["# synthetic decomposition schema"]
    for sid in sorted(PRIMITIVE_SHAPES):
        schema_lines.append(f"C\t{sid}\tvowel")
    for character_id, comp in zip(characters, compositions):
        schema_lines.append(f"E\t{character_id}\t{','.join(comp)}")
    (out_dir / "schema.tsv").write_text("\n".join(schema_lines) + "\n", encoding="utf-8")

    for c_idx, (character_id, comp) in enumerate(zip(characters, compositions)):
        char_dir = out_dir / character_id
        char_dir.mkdir(exist_ok=True)
        truth = {}
        for i in range(samples_per_character):
            spec = SyntheticGlyphSpec(
                composition=tuple(comp),
                jitter=tuple(jitter),
                seed=seed + 10_000 * c_idx + i,
            )
            image, boundaries = compose_glyph(spec)
            arr = np.where(image.pixels, 0, 255).astype(np.uint8)
            name = f"{i:03d}.png"
            Image.fromarray(arr, mode="L").save(char_dir / name)
            truth[name] = [list(pair) for pair in boundaries]
        with open(char_dir / "truth.json", "w", encoding="utf-8") as fh:
            json.dump(truth, fh, indent=0, sort_keys=True)

    manifest = {
        "image_format": "png",
        "samples_per_character": samples_per_character,
        "characters": characters,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return characters
