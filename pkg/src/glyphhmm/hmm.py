"""Left-to-right GMM-HMMs: scoring, Viterbi, Baum-Welch and embedded training.

All dynamic programs run in log space. Models are strictly left-to-right with
self and next transitions only; entry/exit are non-emitting junctions, so a
composite model is a plain concatenation of its parts' emitting states.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
IMPOSSIBLE = -np.inf
_OCC_EPS = 1e-10


class DimensionMismatch(Exception):
    pass


class ImpossiblePath(Exception):
    """No legal alignment exists (fewer frames than emitting states)."""


class NoUsableSequences(Exception):
    pass


@dataclass(frozen=True, eq=False)
class DiagonalGaussian:
    mean: np.ndarray
    variance: np.ndarray


@dataclass(eq=False)
class GaussianMixture:
    """Diagonal-covariance mixture; arrays are (G,) weights and (G, d) moments."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.means.ndim != 2 or self.means.shape != self.variances.shape:
            raise ValueError("means and variances must both be (G, d)")
        if self.weights.shape != (self.means.shape[0],):
            raise ValueError("weights must be (G,)")
        if abs(self.weights.sum() - 1.0) > 1e-9 or (self.weights < 0).any():
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if (self.variances <= 0).any():
            raise ValueError("variances must be positive")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def components(self):
        return [DiagonalGaussian(m, v) for m, v in zip(self.means, self.variances)]


@dataclass(eq=False)
class ClassHMM:
    """Left-to-right HMM for one class; one GaussianMixture per emitting state."""

    class_id: str
    mixtures: list
    self_probs: np.ndarray

    def __post_init__(self):
        self.self_probs = np.asarray(self.self_probs, dtype=np.float64)
        if self.self_probs.shape != (len(self.mixtures),):
            raise ValueError("one self-transition probability per state")
        if ((self.self_probs < 0) | (self.self_probs >= 1)).any():
            raise ValueError("self probabilities must lie in [0, 1)")
        dims = {m.dimension for m in self.mixtures}
        if len(dims) != 1:
            raise ValueError("all states must share the frame dimension")

    @property
    def n_states(self) -> int:
        return len(self.mixtures)

    @property
    def n_components(self) -> int:
        return self.mixtures[0].n_components

    @property
    def dimension(self) -> int:
        return self.mixtures[0].dimension

    @property
    def next_probs(self) -> np.ndarray:
        return 1.0 - self.self_probs


@dataclass(eq=False)
class CompositeHMM:
    """Concatenation of class models; part i's exit feeds part i+1's entry."""

    parts: list

    def __post_init__(self):
        if not self.parts:
            raise ValueError("composite needs at least one part")
        dims = {p.dimension for p in self.parts}
        if len(dims) != 1:
            raise DimensionMismatch("parts disagree on frame dimension")

    @property
    def n_states(self) -> int:
        return sum(p.n_states for p in self.parts)

    @property
    def dimension(self) -> int:
        return self.parts[0].dimension


def _flatten(model):
    """Flat view of a model: (mixtures, log_self, log_next, state->part map, part sizes)."""
    parts = model.parts if isinstance(model, CompositeHMM) else [model]
    mixtures, self_probs, part_of = [], [], []
    for p_idx, part in enumerate(parts):
        mixtures.extend(part.mixtures)
        self_probs.append(part.self_probs)
        part_of.extend([p_idx] * part.n_states)
    self_probs = np.concatenate(self_probs)
    with np.errstate(divide="ignore"):
        log_self = np.log(self_probs)
        log_next = np.log1p(-self_probs)
    return mixtures, log_self, log_next, np.array(part_of), [p.n_states for p in parts]


def gmm_log_densities(mixture: GaussianMixture, frames: np.ndarray) -> np.ndarray:
    """Per-frame log density of a diagonal GMM; frames is (T, d), result (T,)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[1] != mixture.dimension:
        raise DimensionMismatch(
            f"frame dimension {frames.shape[1]} != model dimension {mixture.dimension}"
        )
    diff = frames[:, None, :] - mixture.means[None, :, :]
    maha = np.sum(diff * diff / mixture.variances[None, :, :], axis=2)
    log_norm = -0.5 * (
        mixture.dimension * LOG_2PI + np.sum(np.log(mixture.variances), axis=1)
    )
    with np.errstate(divide="ignore"):
        log_w = np.log(mixture.weights)
    return logsumexp(log_w[None, :] + log_norm[None, :] - 0.5 * maha, axis=1)


def gmm_log_density(mixture: GaussianMixture, frame) -> float:
    return float(gmm_log_densities(mixture, np.atleast_2d(np.asarray(frame)))[0])


def _frames_of(obs) -> np.ndarray:
    frames = getattr(obs, "frames", obs)
    return np.asarray(frames, dtype=np.float64)


def _log_emissions(mixtures, frames) -> np.ndarray:
    return np.stack([gmm_log_densities(m, frames) for m in mixtures], axis=1)


def _forward_lattice(log_b, log_self, log_next):
    T, N = log_b.shape
    alpha = np.full((T, N), IMPOSSIBLE)
    alpha[0, 0] = log_b[0, 0]
    for t in range(1, T):
        stay = alpha[t - 1] + log_self
        enter = np.concatenate(([IMPOSSIBLE], alpha[t - 1, :-1] + log_next[:-1]))
        alpha[t] = log_b[t] + np.logaddexp(stay, enter)
    return alpha


def _backward_lattice(log_b, log_self, log_next):
    T, N = log_b.shape
    beta = np.full((T, N), IMPOSSIBLE)
    beta[T - 1, N - 1] = log_next[N - 1]
    for t in range(T - 2, -1, -1):
        stay = log_self + log_b[t + 1] + beta[t + 1]
        advance = np.concatenate(
            (log_next[:-1] + log_b[t + 1, 1:] + beta[t + 1, 1:], [IMPOSSIBLE])
        )
        beta[t] = np.logaddexp(stay, advance)
    return beta


def forward(model, obs) -> float:
    """Total log-likelihood log p(O | model); -inf when no alignment exists."""
    frames = _frames_of(obs)
    mixtures, log_self, log_next, _, _ = _flatten(model)
    if frames.shape[0] < len(mixtures):
        return IMPOSSIBLE
    log_b = _log_emissions(mixtures, frames)
    alpha = _forward_lattice(log_b, log_self, log_next)
    return float(alpha[-1, -1] + log_next[-1])


def backward(model, obs):
    """Backward log-variables and the total log-likelihood they imply."""
    frames = _frames_of(obs)
    mixtures, log_self, log_next, _, _ = _flatten(model)
    if frames.shape[0] < len(mixtures):
        return np.full((frames.shape[0], len(mixtures)), IMPOSSIBLE), IMPOSSIBLE
    log_b = _log_emissions(mixtures, frames)
    beta = _backward_lattice(log_b, log_self, log_next)
    return beta, float(beta[0, 0] + log_b[0, 0])


def viterbi(model, obs):
    """Best path through the model.

    Returns (best log-likelihood, flat state index per frame, part boundaries).
    A boundary is the 1-based index of the last frame emitted by each part but
    the final one, so boundaries partition 1..T into the composite's parts.
    Exact ties prefer staying in the current state.
    """
    frames = _frames_of(obs)
    mixtures, log_self, log_next, part_of, _ = _flatten(model)
    T, N = frames.shape[0], len(mixtures)
    if T < N:
        raise ImpossiblePath(f"{T} frames cannot align to {N} emitting states")
    log_b = _log_emissions(mixtures, frames)

    delta = np.full((T, N), IMPOSSIBLE)
    from_prev = np.zeros((T, N), dtype=bool)
    delta[0, 0] = log_b[0, 0]
    for t in range(1, T):
        stay = delta[t - 1] + log_self
        enter = np.concatenate(([IMPOSSIBLE], delta[t - 1, :-1] + log_next[:-1]))
        from_prev[t] = enter > stay
        delta[t] = log_b[t] + np.where(from_prev[t], enter, stay)

    lam = float(delta[-1, -1] + log_next[-1])
    path = np.empty(T, dtype=np.int64)
    path[-1] = N - 1
    for t in range(T - 1, 0, -1):
        path[t - 1] = path[t] - 1 if from_prev[t, path[t]] else path[t]

    part_path = part_of[path]
    boundaries = tuple(int(t) for t in np.flatnonzero(np.diff(part_path)) + 1)
    return lam, path, boundaries


@dataclass(eq=False)
class ClassStats:
    """Baum-Welch sufficient statistics for one class."""

    occ: np.ndarray  # (S, G)
    sum_x: np.ndarray  # (S, G, d)
    sum_xx: np.ndarray  # (S, G, d)
    self_count: np.ndarray  # (S,)
    next_count: np.ndarray  # (S,)

    @classmethod
    def zeros(cls, n_states, n_components, dimension):
        return cls(
            occ=np.zeros((n_states, n_components)),
            sum_x=np.zeros((n_states, n_components, dimension)),
            sum_xx=np.zeros((n_states, n_components, dimension)),
            self_count=np.zeros(n_states),
            next_count=np.zeros(n_states),
        )

    def merge(self, other):
        self.occ += other.occ
        self.sum_x += other.sum_x
        self.sum_xx += other.sum_xx
        self.self_count += other.self_count
        self.next_count += other.next_count


@dataclass(eq=False)
class Accumulators:
    """Per-class sufficient statistics; merging is commutative and associative."""

    stats: dict = field(default_factory=dict)
    total_log_likelihood: float = 0.0
    n_sequences: int = 0

    def merge(self, other: "Accumulators"):
        for class_id, st in other.stats.items():
            if class_id in self.stats:
                self.stats[class_id].merge(st)
            else:
                self.stats[class_id] = ClassStats(
                    st.occ.copy(),
                    st.sum_x.copy(),
                    st.sum_xx.copy(),
                    st.self_count.copy(),
                    st.next_count.copy(),
                )
        self.total_log_likelihood += other.total_log_likelihood
        self.n_sequences += other.n_sequences
        return self


def accumulate(model, obs) -> Accumulators:
    """E-step statistics of one sequence against a (composite) model."""
    frames = _frames_of(obs)
    mixtures, log_self, log_next, part_of, _ = _flatten(model)
    T, N = frames.shape[0], len(mixtures)
    if T < N:
        raise ImpossiblePath(f"{T} frames cannot align to {N} emitting states")

    log_b = _log_emissions(mixtures, frames)
    alpha = _forward_lattice(log_b, log_self, log_next)
    beta = _backward_lattice(log_b, log_self, log_next)
    total = alpha[-1, -1] + log_next[-1]
    if not np.isfinite(total):
        raise ImpossiblePath("sequence has zero likelihood under the model")

    log_gamma = alpha + beta - total
    gamma = np.exp(log_gamma)

    parts = model.parts if isinstance(model, CompositeHMM) else [model]
    acc = Accumulators(total_log_likelihood=float(total), n_sequences=1)
    offsets = np.cumsum([0] + [p.n_states for p in parts])

    # component posteriors and moment sums, per flat state
    for j, mixture in enumerate(mixtures):
        part = parts[part_of[j]]
        s = j - offsets[part_of[j]]
        st = acc.stats.get(part.class_id)
        if st is None:
            st = ClassStats.zeros(part.n_states, part.n_components, part.dimension)
            acc.stats[part.class_id] = st
        diff = frames[:, None, :] - mixture.means[None, :, :]
        maha = np.sum(diff * diff / mixture.variances[None, :, :], axis=2)
        log_norm = -0.5 * (
            mixture.dimension * LOG_2PI + np.sum(np.log(mixture.variances), axis=1)
        )
        with np.errstate(divide="ignore"):
            log_w = np.log(mixture.weights)
        log_comp = log_w[None, :] + log_norm[None, :] - 0.5 * maha - log_b[:, j : j + 1]
        comp_post = np.exp(log_gamma[:, j : j + 1] + log_comp)  # (T, G)
        st.occ[s] += comp_post.sum(axis=0)
        st.sum_x[s] += comp_post.T @ frames
        st.sum_xx[s] += comp_post.T @ (frames * frames)

    # transition posteriors; the final frame exits, counting as a next-transition
    if T > 1:
        xi_self = np.exp(
            alpha[:-1] + log_self[None, :] + log_b[1:] + beta[1:] - total
        ).sum(axis=0)
        xi_next = np.exp(
            alpha[:-1, :-1]
            + log_next[None, :-1]
            + log_b[1:, 1:]
            + beta[1:, 1:]
            - total
        ).sum(axis=0)
    else:
        xi_self = np.zeros(N)
        xi_next = np.zeros(N - 1)
    self_counts = xi_self
    next_counts = np.concatenate((xi_next, [gamma[-1, -1]]))
    for j in range(N):
        part = parts[part_of[j]]
        s = j - offsets[part_of[j]]
        st = acc.stats[part.class_id]
        st.self_count[s] += self_counts[j]
        st.next_count[s] += next_counts[j]
    return acc


def reestimate(models: dict, accs: Accumulators, variance_floor):
    """M-step: updated models from merged statistics.

    Classes (or states/components) with no occupancy keep their parameters and
    are reported back as starved rather than failing the update.
    """
    variance_floor = np.asarray(variance_floor, dtype=np.float64)
    updated, starved = {}, []
    for class_id, model in models.items():
        st = accs.stats.get(class_id)
        if st is None or st.occ.sum() < _OCC_EPS:
            updated[class_id] = model
            starved.append(class_id)
            continue
        new_mixtures = []
        new_self = model.self_probs.copy()
        for s, mixture in enumerate(model.mixtures):
            state_occ = st.occ[s].sum()
            if state_occ < _OCC_EPS:
                new_mixtures.append(mixture)
                continue
            weights = st.occ[s] / state_occ
            means = mixture.means.copy()
            variances = mixture.variances.copy()
            for g in range(mixture.n_components):
                if st.occ[s, g] < _OCC_EPS:
                    continue
                mean = st.sum_x[s, g] / st.occ[s, g]
                var = st.sum_xx[s, g] / st.occ[s, g] - mean * mean
                means[g] = mean
                variances[g] = np.maximum(var, variance_floor)
            new_mixtures.append(GaussianMixture(weights, means, variances))
            denom = st.self_count[s] + st.next_count[s]
            if denom > _OCC_EPS:
                new_self[s] = st.self_count[s] / denom
        new_self = np.clip(new_self, 0.0, 1.0 - 1e-12)
        updated[class_id] = ClassHMM(class_id, new_mixtures, new_self)
    return updated, starved


def flat_start(sequences, n_states: int, class_id: str = "", variance_floor=None) -> ClassHMM:
    """Single-Gaussian model from uniform time-segmentation of the sequences.

    Sequences shorter than ``n_states`` frames are skipped with a warning.
    """
    frames_list = [_frames_of(s) for s in sequences]
    usable = [f for f in frames_list if f.shape[0] >= n_states]
    if len(usable) < len(frames_list):
        log.warning(
            "flat_start(%s): skipped %d sequences shorter than %d frames",
            class_id,
            len(frames_list) - len(usable),
            n_states,
        )
    if not usable:
        raise NoUsableSequences(f"no sequence long enough for {n_states} states")

    dim = usable[0].shape[1]
    if variance_floor is None:
        pooled = np.vstack(usable)
        variance_floor = np.maximum(1e-2 * pooled.var(axis=0), 1e-6)
    variance_floor = np.broadcast_to(
        np.asarray(variance_floor, dtype=np.float64), (dim,)
    )

    pools = [[] for _ in range(n_states)]
    for f in usable:
        T = f.shape[0]
        cuts = (np.arange(n_states + 1) * T) // n_states
        for s in range(n_states):
            pools[s].append(f[cuts[s] : cuts[s + 1]])

    mixtures = []
    for s in range(n_states):
        seg = np.vstack(pools[s])
        mean = seg.mean(axis=0)
        var = np.maximum(seg.var(axis=0), variance_floor)
        mixtures.append(GaussianMixture(np.ones(1), mean[None, :], var[None, :]))

    mean_len = float(np.mean([f.shape[0] for f in usable]))
    self_p = np.clip((mean_len - n_states) / mean_len, 0.1, 0.95)
    return ClassHMM(class_id, mixtures, np.full(n_states, self_p))


def split_mixtures(model: ClassHMM) -> ClassHMM:
    """Double G: each component becomes two at mean +/- 0.2 stddev, half weight."""
    new_mixtures = []
    for mixture in model.mixtures:
        offset = 0.2 * np.sqrt(mixture.variances)
        means = np.concatenate((mixture.means + offset, mixture.means - offset))
        variances = np.concatenate((mixture.variances, mixture.variances))
        weights = np.concatenate((mixture.weights, mixture.weights)) / 2.0
        new_mixtures.append(GaussianMixture(weights, means, variances))
    return ClassHMM(model.class_id, new_mixtures, model.self_probs.copy())


@dataclass(frozen=True)
class TrainingSchedule:
    """Mixture-doubling schedule: fixed re-estimation passes per mixture size."""

    target_G: int = 4
    iterations_per_level: int = 2

    def __post_init__(self):
        g = self.target_G
        if g < 1 or (g & (g - 1)) != 0:
            raise ValueError("target_G must be a power of two reachable by doubling")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")

    @property
    def levels(self):
        level, out = 1, []
        while level <= self.target_G:
            out.append(level)
            level *= 2
        return out


@dataclass(eq=False)
class TrainResult:
    models: dict
    trace: list  # total corpus log-likelihood at the start of each sweep
    skipped: int  # sequences with no legal alignment, excluded from training
    starved: list  # (sweep index, class_id) pairs


def embedded_train(
    labeled,
    n_states: int,
    schedule: TrainingSchedule,
    variance_floor=None,
    early_stop_tol=None,
) -> TrainResult:
    """Baum-Welch over concatenated class models, from composite labels only.

    ``labeled`` is a list of (observation, class-id sequence) pairs. All
    classes get a flat start pooled over uniform per-part cuts of every
    composite they appear in, then each mixture level runs a fixed number of
    accumulate/re-estimate sweeps before G doubles.
    """
    labeled = [(_frames_of(obs), tuple(label)) for obs, label in labeled]
    if not labeled:
        raise NoUsableSequences("no training sequences")
    class_ids = []
    for _, label in labeled:
        for cid in label:
            if cid not in class_ids:
                class_ids.append(cid)

    all_frames = np.vstack([f for f, _ in labeled])
    if variance_floor is None:
        variance_floor = np.maximum(1e-2 * all_frames.var(axis=0), 1e-6)

    # flat start from uniform per-part cuts
    pools = {cid: [] for cid in class_ids}
    for frames, label in labeled:
        k = len(label)
        cuts = (np.arange(k + 1) * frames.shape[0]) // k
        for i, cid in enumerate(label):
            pools[cid].append(frames[cuts[i] : cuts[i + 1]])
    models = {}
    for cid in class_ids:
        models[cid] = flat_start(pools[cid], n_states, cid, variance_floor)

    usable = [
        (frames, label)
        for frames, label in labeled
        if frames.shape[0] >= n_states * len(label)
    ]
    skipped = len(labeled) - len(usable)
    if skipped:
        log.warning("embedded_train: %d sequences have no legal alignment", skipped)
    if not usable:
        raise NoUsableSequences("every sequence is shorter than its composite")

    trace, starved_events = [], []
    sweep = 0
    for level in schedule.levels:
        level_trace = []
        for _ in range(schedule.iterations_per_level):
            merged = Accumulators()
            for frames, label in usable:
                composite = CompositeHMM([models[cid] for cid in label])
                merged.merge(accumulate(composite, frames))
            models, starved = reestimate(models, merged, variance_floor)
            for cid in starved:
                starved_events.append((sweep, cid))
            trace.append(merged.total_log_likelihood)
            level_trace.append(merged.total_log_likelihood)
            sweep += 1
            if (
                early_stop_tol is not None
                and len(level_trace) >= 2
                and abs(level_trace[-1] - level_trace[-2])
                < early_stop_tol * abs(level_trace[-2])
            ):
                break
        if level < schedule.target_G:
            models = {cid: split_mixtures(m) for cid, m in models.items()}
    return TrainResult(models=models, trace=trace, skipped=skipped, starved=starved_events)


MODEL_FILE_HEADER = "GLYPHHMM-MODELS 1"


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).ravel())


def save_models(path, models: dict) -> None:
    """Write models as versioned text; round-trips scores to within 1e-10."""
    ordered = sorted(models)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_FILE_HEADER + "\n")
        dim = models[ordered[0]].dimension if ordered else 0
        fh.write(f"dimension {dim}\n")
        fh.write(f"classes {len(ordered)}\n")
        for cid in ordered:
            m = models[cid]
            fh.write(f"class {cid} states {m.n_states} components {m.n_components}\n")
            fh.write(f"self {_fmt(m.self_probs)}\n")
            for s, mix in enumerate(m.mixtures):
                fh.write(f"state {s}\n")
                fh.write(f"weights {_fmt(mix.weights)}\n")
                for g in range(mix.n_components):
                    fh.write(f"mean {_fmt(mix.means[g])}\n")
                    fh.write(f"var {_fmt(mix.variances[g])}\n")


class ModelFormatError(Exception):
    pass


def load_models(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MODEL_FILE_HEADER:
        raise ModelFormatError(f"unrecognized model file header in {path}")
    pos = 1

    def expect(prefix):
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix + " "):
            raise ModelFormatError(f"expected {prefix!r} at line {pos + 1} of {path}")
        rest = lines[pos][len(prefix) + 1 :]
        pos += 1
        return rest

    dim = int(expect("dimension"))
    n_classes = int(expect("classes"))
    models = {}
    for _ in range(n_classes):
        head = expect("class").split()
        cid, n_states, n_comp = head[0], int(head[2]), int(head[4])
        self_probs = np.array([float(x) for x in expect("self").split()])
        mixtures = []
        for s in range(n_states):
            expect("state")
            weights = np.array([float(x) for x in expect("weights").split()])
            means = np.empty((n_comp, dim))
            variances = np.empty((n_comp, dim))
            for g in range(n_comp):
                means[g] = [float(x) for x in expect("mean").split()]
                variances[g] = [float(x) for x in expect("var").split()]
            mixtures.append(GaussianMixture(weights, means, variances))
        models[cid] = ClassHMM(cid, mixtures, self_probs)
    return models
