"""FAR/FRR/EER metrics, synthetic paired datasets, and the evaluation harness.

The originally reported accuracy figures for this kind of face + palmprint
system came from a private image collection, so the harness here measures
the same metric suite on synthetic paired data: per-subject smooth
prototypes plus Gaussian pixel noise, split by sample index into
train/tune/test, scored per modality and fused, and reported as FAR, FRR,
accuracy, EER and a full ROC sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fusion, imaging, matching, subspace
from .config import RunConfig
from .errors import DatasetError
from .fusion import FusionPolicy, ModalityErrorStats
from .matching import DistanceNormalizer
from .modality import Modality
from .subspace import FeatureVector, SubspaceModel

_PROTO_WAVES = 3  # random cosine components per prototype


@dataclass(frozen=True)
class ScoreSet:
    """Genuine and impostor trial scores, all in [0, 1]."""

    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        for name in ("genuine", "impostor"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError(f"{name} scores must be finite and lie in [0, 1]")
            object.__setattr__(self, name, arr)

    def require_nonempty(self):
        if self.genuine.size == 0 or self.impostor.size == 0:
            raise ValueError("metrics need nonempty genuine and impostor score lists")


@dataclass(frozen=True)
class EvalReport:
    """Metrics of one score stream at a fixed operating threshold.

    ``roc`` is a (T, 3) array of (threshold, FAR, FRR) rows swept over the
    union of observed scores plus {0, 1}.
    """

    threshold: float
    far: float
    frr: float
    accuracy: float
    eer: float
    eer_threshold: float
    roc: np.ndarray


def far_frr(scores: ScoreSet, threshold: float) -> tuple[float, float]:
    """FAR = impostors at/above threshold; FRR = genuines below it.

    The boundary matches the decision rule: a score equal to the threshold
    is an accept.
    """
    scores.require_nonempty()
    far = float(np.mean(scores.impostor >= threshold))
    frr = float(np.mean(scores.genuine < threshold))
    return far, frr


def accuracy(scores: ScoreSet, threshold: float) -> float:
    """Fraction of all trials decided correctly at the threshold."""
    scores.require_nonempty()
    correct = int(np.sum(scores.genuine >= threshold)) + int(np.sum(scores.impostor < threshold))
    return correct / (scores.genuine.size + scores.impostor.size)


def roc_and_eer(scores: ScoreSet, operating_threshold: float | None = None) -> EvalReport:
    """Sweep thresholds, locate the EER point, and report operating metrics.

    Thresholds are the sorted union of all observed scores plus {0, 1}.
    The EER is taken where FAR and FRR cross, linearly interpolating
    between adjacent sweep points; if the curves never cross inside the
    sweep, the midpoint (FAR+FRR)/2 at the sweep point minimizing
    |FAR-FRR| is used. At-threshold metrics are evaluated exactly at
    ``operating_threshold`` (default: the EER threshold).
    """
    scores.require_nonempty()
    thresholds = np.unique(np.concatenate((scores.genuine, scores.impostor, [0.0, 1.0])))
    imp_sorted = np.sort(scores.impostor)
    gen_sorted = np.sort(scores.genuine)
    fars = (imp_sorted.size - np.searchsorted(imp_sorted, thresholds, side="left")) / imp_sorted.size
    frrs = np.searchsorted(gen_sorted, thresholds, side="left") / gen_sorted.size

    eer, eer_threshold = _eer_point(thresholds, fars, frrs)
    threshold = eer_threshold if operating_threshold is None else float(operating_threshold)
    far_t, frr_t = far_frr(scores, threshold)
    return EvalReport(
        threshold=threshold,
        far=far_t,
        frr=frr_t,
        accuracy=accuracy(scores, threshold),
        eer=eer,
        eer_threshold=eer_threshold,
        roc=np.column_stack((thresholds, fars, frrs)),
    )


def _eer_point(thresholds, fars, frrs) -> tuple[float, float]:
    """EER and its threshold from a swept (monotone) FAR/FRR pair."""
    diff = fars - frrs  # non-increasing in the threshold
    crossing = np.nonzero(diff <= 0.0)[0]
    if crossing.size == 0:
        i = int(np.argmin(np.abs(diff)))
        return float((fars[i] + frrs[i]) / 2.0), float(thresholds[i])
    j = int(crossing[0])
    if diff[j] == 0.0 or j == 0:
        return float((fars[j] + frrs[j]) / 2.0), float(thresholds[j])
    i = j - 1
    frac = diff[i] / (diff[i] - diff[j])
    eer = fars[i] + frac * (fars[j] - fars[i])
    threshold = thresholds[i] + frac * (thresholds[j] - thresholds[i])
    return float(eer), float(threshold)


# ---------------------------------------------------------------------------
# Synthetic paired datasets


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic paired face/palm dataset.

    Per subject, one smooth random face prototype and one independent palm
    prototype are drawn; each sample adds Gaussian pixel noise (shared
    between the modalities of a sample pair when ``independent_noise`` is
    False) and clamps to [0, 1]. Fully deterministic given the seed.
    """

    subjects: int = 40
    samples_per_subject: int = 6
    rows: int = 32
    cols: int = 32
    contrast: float = 0.5
    sigma: float = 0.08
    independent_noise: bool = True
    seed: int = 1

    def __post_init__(self):
        if self.subjects < 2:
            raise ValueError(f"need at least 2 subjects, got {self.subjects}")
        if self.samples_per_subject < 2:
            raise ValueError(f"need at least 2 samples per subject, got {self.samples_per_subject}")
        if self.rows < 2 or self.cols < 2:
            raise ValueError(f"image size {self.rows}x{self.cols} is too small")
        if not 0.0 < self.contrast <= 1.0:
            raise ValueError(f"contrast must be in (0, 1], got {self.contrast}")
        if self.sigma <= 0.0:
            raise ValueError(f"noise sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class SubjectSamples:
    """All grayscale samples of one subject, per modality."""

    subject_id: str
    face: tuple
    palm: tuple

    def samples(self, modality: Modality) -> tuple:
        return self.face if modality is Modality.FACE else self.palm


def synthesize_dataset(spec: SynthSpec) -> list[SubjectSamples]:
    """Generate the paired dataset described by ``spec``."""
    rng = np.random.default_rng(spec.seed)
    shape = (spec.rows, spec.cols)
    dataset = []
    for s in range(spec.subjects):
        face_proto = _prototype(rng, shape, spec.contrast)
        palm_proto = _prototype(rng, shape, spec.contrast)
        face_samples, palm_samples = [], []
        for _ in range(spec.samples_per_subject):
            face_noise = rng.normal(0.0, spec.sigma, shape)
            palm_noise = rng.normal(0.0, spec.sigma, shape) if spec.independent_noise else face_noise
            face_samples.append(np.clip(face_proto + face_noise, 0.0, 1.0))
            palm_samples.append(np.clip(palm_proto + palm_noise, 0.0, 1.0))
        dataset.append(
            SubjectSamples(
                subject_id=f"s{s + 1:03d}",
                face=tuple(face_samples),
                palm=tuple(palm_samples),
            )
        )
    return dataset


def _prototype(rng: np.random.Generator, shape: tuple[int, int], contrast: float) -> np.ndarray:
    """Smooth low-frequency pattern: a few random 2-D cosines, centered at 0.5."""
    rows, cols = shape
    y = np.arange(rows)[:, None] / rows
    x = np.arange(cols)[None, :] / cols
    pattern = np.zeros(shape)
    for _ in range(_PROTO_WAVES):
        amp = rng.uniform(0.5, 1.0)
        fy = rng.uniform(0.5, 3.0)
        fx = rng.uniform(0.5, 3.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        pattern += amp * np.cos(2.0 * np.pi * (fy * y + fx * x) + phase)
    span = pattern.max() - pattern.min()
    if span == 0.0:
        return np.full(shape, 0.5)
    unit = (pattern - pattern.min()) / span
    return 0.5 + contrast * (unit - 0.5)


# ---------------------------------------------------------------------------
# End-to-end experiment


@dataclass(frozen=True)
class SampleSplit:
    """Per-subject sample indices for the three phases."""

    train: tuple[int, ...]
    tune: tuple[int, ...]
    test: tuple[int, ...]


def split_by_sample_index(n_samples: int) -> SampleSplit:
    """First half trains, half the rest tunes, the remainder tests.

    Raises DatasetError if any phase would be empty (fewer than 3
    samples).
    """
    n_train = n_samples // 2
    rest = n_samples - n_train
    n_tune = rest // 2
    n_test = rest - n_tune
    if n_train == 0 or n_tune == 0 or n_test == 0:
        raise DatasetError(
            f"cannot split {n_samples} samples into nonempty train/tune/test phases"
        )
    return SampleSplit(
        train=tuple(range(n_train)),
        tune=tuple(range(n_train, n_train + n_tune)),
        test=tuple(range(n_train + n_tune, n_samples)),
    )


@dataclass
class ExperimentResult:
    """Everything one evaluation run produces."""

    face: EvalReport
    palm: EvalReport
    fused: EvalReport
    policy: FusionPolicy
    weights_clamped: bool
    face_tune_eer: float
    palm_tune_eer: float
    models: dict = field(repr=False)
    normalizers: dict = field(repr=False)
    genuine_trials: int = 0
    impostor_trials: int = 0


def run_experiment(dataset, config: RunConfig | None = None) -> ExperimentResult:
    """Train, tune, and test both modalities plus their fusion.

    Training images are each subject's train-split samples; the same
    images are the enrolled templates. Normalizers fit on pooled pairwise
    train distances, fusion weights on tune-split EERs (unless fixed in
    the config), the decision threshold on the tune-split fused EER point
    (unless fixed), and all three reports are computed on the identical
    test trial list: every test sample against its own subject as genuine
    trials, each subject's first test sample against every other subject
    as impostor trials.
    """
    config = config or RunConfig()
    subjects = sorted(dataset, key=lambda s: s.subject_id)
    if len(subjects) < 2:
        raise DatasetError(f"evaluation needs at least 2 subjects, got {len(subjects)}")

    splits = {s.subject_id: split_by_sample_index(len(s.face)) for s in subjects}
    for s in subjects:
        if len(s.face) != len(s.palm):
            raise DatasetError(f"subject {s.subject_id}: face/palm sample counts differ")

    models: dict[Modality, SubspaceModel] = {}
    normalizers: dict[Modality, DistanceNormalizer] = {}
    enrolled: dict[Modality, dict[str, list[FeatureVector]]] = {}
    processed: dict[Modality, dict[str, list[np.ndarray]]] = {}

    for modality in Modality:
        imgs = {
            s.subject_id: [
                imaging.preprocess_matrix(im, modality, config.size)
                for im in s.samples(modality)
            ]
            for s in subjects
        }
        processed[modality] = imgs
        train_imgs = [
            imgs[s.subject_id][i] for s in subjects for i in splits[s.subject_id].train
        ]
        model = subspace.train(train_imgs, modality, energy=config.energy, k=config.k)
        models[modality] = model
        feats = {
            s.subject_id: [subspace.project(model, imgs[s.subject_id][i]) for i in splits[s.subject_id].train]
            for s in subjects
        }
        enrolled[modality] = feats
        all_train = [f for fs in feats.values() for f in fs]
        normalizers[modality] = DistanceNormalizer.fit(matching.pairwise_distances(all_train))

    def phase_scores(phase: str) -> dict[Modality, ScoreSet]:
        out = {}
        for modality in Modality:
            out[modality] = _trial_scores(
                subjects,
                splits,
                phase,
                processed[modality],
                enrolled[modality],
                models[modality],
                normalizers[modality],
            )
        return out

    tune = phase_scores("tune")
    face_tune = roc_and_eer(tune[Modality.FACE])
    palm_tune = roc_and_eer(tune[Modality.PALM])

    if config.alpha is not None:
        weights = fusion.FusionWeights(
            *_normalized(config.alpha, config.beta), clamped=False
        )
    else:
        weights = fusion.compute_weights(
            ModalityErrorStats(min(face_tune.eer, 0.5)),
            ModalityErrorStats(min(palm_tune.eer, 0.5)),
        )

    fused_tune = ScoreSet(
        genuine=fusion.fuse_many(
            tune[Modality.FACE].genuine, tune[Modality.PALM].genuine, _policy_stub(weights)
        ),
        impostor=fusion.fuse_many(
            tune[Modality.FACE].impostor, tune[Modality.PALM].impostor, _policy_stub(weights)
        ),
    )
    threshold = (
        config.threshold
        if config.threshold is not None
        else roc_and_eer(fused_tune).eer_threshold
    )
    policy = FusionPolicy(alpha=weights.alpha, beta=weights.beta, threshold=threshold)

    test = phase_scores("test")
    fused_test = ScoreSet(
        genuine=fusion.fuse_many(test[Modality.FACE].genuine, test[Modality.PALM].genuine, policy),
        impostor=fusion.fuse_many(test[Modality.FACE].impostor, test[Modality.PALM].impostor, policy),
    )

    return ExperimentResult(
        face=roc_and_eer(test[Modality.FACE], operating_threshold=face_tune.eer_threshold),
        palm=roc_and_eer(test[Modality.PALM], operating_threshold=palm_tune.eer_threshold),
        fused=roc_and_eer(fused_test, operating_threshold=policy.threshold),
        policy=policy,
        weights_clamped=weights.clamped,
        face_tune_eer=face_tune.eer,
        palm_tune_eer=palm_tune.eer,
        models=models,
        normalizers=normalizers,
        genuine_trials=fused_test.genuine.size,
        impostor_trials=fused_test.impostor.size,
    )


def _normalized(alpha: float, beta: float) -> tuple[float, float]:
    a = 2.0 * alpha / (alpha + beta)
    return a, 2.0 - a


def _policy_stub(weights: fusion.FusionWeights) -> FusionPolicy:
    # Threshold is irrelevant while only fusing scores.
    return FusionPolicy(alpha=weights.alpha, beta=weights.beta, threshold=0.5)


def _trial_scores(
    subjects,
    splits,
    phase: str,
    images: dict[str, list[np.ndarray]],
    enrolled: dict[str, list[FeatureVector]],
    model: SubspaceModel,
    normalizer: DistanceNormalizer,
) -> ScoreSet:
    """Scores for the deterministic trial protocol of one phase.

    Genuine trials: every phase sample of a subject against that subject.
    Impostor trials: each subject's first phase sample against every other
    subject. A subject's score is the minimum distance over their enrolled
    samples, mapped through the normalizer.
    """
    gallery_ids = [s.subject_id for s in subjects]
    gallery_mat = np.vstack([np.stack([f.coords for f in enrolled[sid]]) for sid in gallery_ids])
    counts = [len(enrolled[sid]) for sid in gallery_ids]
    bounds = np.concatenate(([0], np.cumsum(counts)))

    genuine_scores: list[float] = []
    impostor_scores: list[float] = []
    col = {sid: i for i, sid in enumerate(gallery_ids)}
    for s in subjects:
        idx = getattr(splits[s.subject_id], phase)
        probes = np.stack(
            [subspace.project(model, images[s.subject_id][i]).coords for i in idx]
        )
        dists = _cross_distances(probes, gallery_mat)
        per_subject = np.minimum.reduceat(dists, bounds[:-1], axis=1)
        sims = normalizer.similarity(per_subject)
        own = col[s.subject_id]
        genuine_scores.extend(sims[:, own])
        impostor_scores.extend(np.delete(sims[0], own))
    return ScoreSet(genuine=np.array(genuine_scores), impostor=np.array(impostor_scores))


def _cross_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between every row of ``a`` and every row of ``b``."""
    sq_a = np.sum(a**2, axis=1)[:, None]
    sq_b = np.sum(b**2, axis=1)[None, :]
    return np.sqrt(np.maximum(sq_a + sq_b - 2.0 * (a @ b.T), 0.0))


# ---------------------------------------------------------------------------
# Report emission

ROC_HEADER = "threshold,far,frr"
SUMMARY_COLUMNS = ("Trait", "Algorithm", "FAR", "FRR", "Accuracy")
ALGORITHM_LABEL = "eigen-subspace (canonical form)"
FUSION_LABEL = "weighted sum of scores"


def roc_csv(report: EvalReport) -> str:
    """UTF-8 CSV body of the ROC sweep: threshold,far,frr rows."""
    lines = [ROC_HEADER]
    for t, far, frr in report.roc:
        lines.append(f"{t:.12g},{far:.12g},{frr:.12g}")
    return "\n".join(lines) + "\n"


def summary_rows(result: ExperimentResult) -> list[dict]:
    """Trait/Algorithm/FAR/FRR/Accuracy rows for the three systems."""
    def row(trait: str, algorithm: str, report: EvalReport) -> dict:
        return {
            "Trait": trait,
            "Algorithm": algorithm,
            "FAR": report.far,
            "FRR": report.frr,
            "Accuracy": report.accuracy,
        }

    return [
        row("Face", ALGORITHM_LABEL, result.face),
        row("Palmprint", ALGORITHM_LABEL, result.palm),
        row("Fused", FUSION_LABEL, result.fused),
    ]


def summary_csv(result: ExperimentResult) -> str:
    lines = [",".join(SUMMARY_COLUMNS)]
    for r in summary_rows(result):
        lines.append(
            f"{r['Trait']},{r['Algorithm']},{_pct(r['FAR'])},{_pct(r['FRR'])},{_pct(r['Accuracy'])}"
        )
    return "\n".join(lines) + "\n"


def summary_table(result: ExperimentResult) -> str:
    """Human-readable table with the same columns as the CSV summary."""
    rows = [
        (r["Trait"], r["Algorithm"], _pct(r["FAR"]), _pct(r["FRR"]), _pct(r["Accuracy"]))
        for r in summary_rows(result)
    ]
    widths = [
        max(len(SUMMARY_COLUMNS[i]), *(len(row[i]) for row in rows))
        for i in range(len(SUMMARY_COLUMNS))
    ]
    def fmt(cells) -> str:
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()

    lines = [fmt(SUMMARY_COLUMNS), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}%"
