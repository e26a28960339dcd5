"""End-to-end operations behind the service endpoints and the CLI.

Each function loads whatever artifacts it needs from disk, runs the core
modules, persists its outputs, and returns a plain result object the
service layer serializes. Model/normalizer files live under a models
directory with fixed names (face.model, palm.model, face.norm, palm.norm);
datasets travel as a directory of PGM files plus a manifest.csv with
``subject_id,modality,sample_index,path`` rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation, fusion, imaging, matching, store, subspace
from .config import DEFAULT_THRESHOLD, RunConfig
from .errors import DatasetError, FuseIdError, ImageLoadError, UnknownSubjectError
from .evaluation import ExperimentResult, SubjectSamples, SynthSpec
from .fusion import Decision, FusionPolicy
from .matching import DistanceNormalizer, Template
from .modality import Modality
from .store import GalleryRecord
from .subspace import SubspaceModel

MODEL_FILE = {Modality.FACE: "face.model", Modality.PALM: "palm.model"}
NORMALIZER_FILE = {Modality.FACE: "face.norm", Modality.PALM: "palm.norm"}
MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ("subject_id", "modality", "sample_index", "path")

_IMAGE_SUFFIXES = (".pgm", ".ppm")


# ---------------------------------------------------------------------------
# result containers


@dataclass
class ModalityTrainInfo:
    modality: Modality
    n_pixels: int
    n_images: int
    k: int
    retained_energy: float
    model_path: str
    normalizer_path: str


@dataclass
class TrainResult:
    face: ModalityTrainInfo
    palm: ModalityTrainInfo


@dataclass
class EnrollResult:
    gallery_path: str
    subjects: int
    samples: int


@dataclass
class VerifyResult:
    claimed_id: str
    decision: Decision


@dataclass
class Candidate:
    subject_id: str
    fused: float
    face: float
    palm: float


@dataclass
class IdentifyResult:
    candidates: list[Candidate]
    policy: FusionPolicy


@dataclass
class EvaluateResult:
    experiment: ExperimentResult = field(repr=False)
    summary_text: str = ""
    csv_paths: dict = field(default_factory=dict)
    policy_path: str | None = None


@dataclass
class SynthResult:
    out_dir: str
    manifest_path: str
    images_written: int
    subjects: int
    samples_per_subject: int


# ---------------------------------------------------------------------------
# training


def train_models(face_dir, palm_dir, models_dir, config: RunConfig | None = None) -> TrainResult:
    """Train both subspace models from image directories and persist them.

    Each directory must hold at least two readable PGM/PPM images; every
    unreadable file is reported in one error. Alongside each model, a
    min-max distance normalizer fitted on the pooled pairwise training
    distances is written.
    """
    config = config or RunConfig()
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    infos = {}
    for modality, img_dir in ((Modality.FACE, face_dir), (Modality.PALM, palm_dir)):
        images = _load_directory(img_dir, modality, config.size)
        model = subspace.train(images, modality, energy=config.energy, k=config.k)
        flat = [imaging.flatten(im) for im in images]
        diffs = subspace.center(flat, model.mean)
        total_variance = float(sum(np.dot(d, d) for d in diffs)) / len(diffs)
        retained = float(np.sum(model.eigenvalues)) / total_variance if total_variance else 1.0
        feats = [subspace.project(model, im) for im in images]
        normalizer = DistanceNormalizer.fit(matching.pairwise_distances(feats))
        model_path = models_dir / MODEL_FILE[modality]
        norm_path = models_dir / NORMALIZER_FILE[modality]
        store.save_model(model, model_path)
        store.save_normalizer(normalizer, modality, norm_path)
        infos[modality] = ModalityTrainInfo(
            modality=modality,
            n_pixels=model.n_pixels,
            n_images=len(images),
            k=model.k,
            retained_energy=min(retained, 1.0),
            model_path=str(model_path),
            normalizer_path=str(norm_path),
        )
    return TrainResult(face=infos[Modality.FACE], palm=infos[Modality.PALM])


def _load_directory(img_dir, modality: Modality, size: tuple[int, int]) -> list[np.ndarray]:
    img_dir = Path(img_dir)
    if not img_dir.is_dir():
        raise DatasetError(f"{img_dir} is not a directory")
    paths = sorted(p for p in img_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if len(paths) < 2:
        raise DatasetError(f"{img_dir}: need at least 2 images, found {len(paths)}")
    images, failures = [], []
    for p in paths:
        try:
            images.append(imaging.preprocess(imaging.load_image(p), modality, size))
        except (ImageLoadError, OSError) as e:
            failures.append(f"{p}: {e}")
    if failures:
        raise DatasetError("unreadable images:\n" + "\n".join(failures))
    return images


def load_models(models_dir) -> dict[Modality, tuple[SubspaceModel, DistanceNormalizer]]:
    models_dir = Path(models_dir)
    out = {}
    for modality in Modality:
        model = store.load_model(models_dir / MODEL_FILE[modality])
        normalizer, norm_modality = store.load_normalizer(models_dir / NORMALIZER_FILE[modality])
        if model.modality is not modality or norm_modality is not modality:
            raise FuseIdError(f"{models_dir}: {modality} artifacts tagged with the wrong modality")
        out[modality] = (model, normalizer)
    return out


# ---------------------------------------------------------------------------
# enrollment


def enroll_from_manifest(data_dir, models_dir, gallery_path) -> EnrollResult:
    """Enroll every subject listed in a dataset manifest.

    Each subject needs at least one sample per modality. Re-enrolling a
    subject replaces their record.
    """
    entries = _read_manifest(data_dir)
    loaded = load_models(models_dir)
    records = []
    for sid in sorted(entries):
        per_modality = {}
        for modality in Modality:
            rows = entries[sid].get(modality, [])
            if not rows:
                raise DatasetError(f"subject {sid!r} has no {modality} samples in the manifest")
            model, _ = loaded[modality]
            feats = []
            for _, path in sorted(rows):
                img = imaging.preprocess(imaging.load_image(path), modality, model.canonical_size)
                feats.append(subspace.project(model, img))
            per_modality[modality] = tuple(feats)
        records.append(
            GalleryRecord.now(sid, face=per_modality[Modality.FACE], palm=per_modality[Modality.PALM])
        )
    return _merge_and_save(records, gallery_path)


def enroll_subject(subject_id, face_paths, palm_paths, models_dir, gallery_path) -> EnrollResult:
    """Enroll (or replace) a single subject from explicit image files."""
    if not face_paths or not palm_paths:
        raise DatasetError("enrollment needs at least one face and one palm image")
    loaded = load_models(models_dir)
    per_modality = {}
    for modality, paths in ((Modality.FACE, face_paths), (Modality.PALM, palm_paths)):
        model, _ = loaded[modality]
        feats = [
            subspace.project(
                model, imaging.preprocess(imaging.load_image(p), modality, model.canonical_size)
            )
            for p in paths
        ]
        per_modality[modality] = tuple(feats)
    record = GalleryRecord.now(
        subject_id, face=per_modality[Modality.FACE], palm=per_modality[Modality.PALM]
    )
    return _merge_and_save([record], gallery_path)


def _merge_and_save(new_records, gallery_path) -> EnrollResult:
    gallery_path = Path(gallery_path)
    existing = store.load_gallery(gallery_path) if gallery_path.exists() else []
    merged = {rec.subject_id: rec for rec in existing}
    for rec in new_records:
        merged[rec.subject_id] = rec
    records = [merged[sid] for sid in sorted(merged)]
    gallery_path.parent.mkdir(parents=True, exist_ok=True)
    store.save_gallery(records, gallery_path)
    samples = sum(len(r.face) + len(r.palm) for r in records)
    return EnrollResult(gallery_path=str(gallery_path), subjects=len(records), samples=samples)


# ---------------------------------------------------------------------------
# verification / identification


def resolve_policy(policy_path, config: RunConfig) -> FusionPolicy:
    """Policy file if given, else fixed weights/threshold from the config.

    With nothing to tune on, the fallback is equal weights and a 0.5
    threshold.
    """
    if policy_path:
        return store.load_policy(policy_path)
    alpha = config.alpha if config.alpha is not None else 1.0
    beta = config.beta if config.beta is not None else 1.0
    threshold = config.threshold if config.threshold is not None else DEFAULT_THRESHOLD
    return FusionPolicy.from_raw_weights(alpha, beta, threshold)


def _probe_scores(face_path, palm_path, loaded, gallery):
    """Similarity of the probe pair against every gallery subject, per modality."""
    scores = {}
    for modality, img_path in ((Modality.FACE, face_path), (Modality.PALM, palm_path)):
        model, normalizer = loaded[modality]
        img = imaging.preprocess(imaging.load_image(img_path), modality, model.canonical_size)
        probe = subspace.project(model, img)
        templates = []
        for rec in gallery:
            vectors = rec.vectors(modality)
            if not vectors:
                raise DatasetError(f"subject {rec.subject_id!r} has no enrolled {modality} samples")
            templates.append(Template(subject_id=rec.subject_id, vectors=vectors))
        ranked = matching.match_gallery(probe, templates, normalizer)
        scores[modality] = {s.subject_id: s.similarity for s in ranked}
    return scores


def verify(face_path, palm_path, claimed_id, models_dir, gallery_path, policy: FusionPolicy) -> VerifyResult:
    """1:1 check of a probe pair against one enrolled subject."""
    gallery = store.load_gallery(gallery_path)
    record = next((r for r in gallery if r.subject_id == claimed_id), None)
    if record is None:
        raise UnknownSubjectError(f"unknown subject {claimed_id!r}: not enrolled in {gallery_path}")
    loaded = load_models(models_dir)
    scores = _probe_scores(face_path, palm_path, loaded, [record])
    ms_face = scores[Modality.FACE][claimed_id]
    ms_palm = scores[Modality.PALM][claimed_id]
    fused = fusion.fuse(ms_face, ms_palm, policy)
    decision = fusion.decide(fused, policy, face_score=ms_face, palm_score=ms_palm)
    return VerifyResult(claimed_id=claimed_id, decision=decision)


def identify(face_path, palm_path, models_dir, gallery_path, policy: FusionPolicy, top: int = 5) -> IdentifyResult:
    """1:N ranking of the whole gallery by fused score."""
    gallery = store.load_gallery(gallery_path)
    if not gallery:
        raise DatasetError(f"gallery {gallery_path} is empty")
    loaded = load_models(models_dir)
    scores = _probe_scores(face_path, palm_path, loaded, gallery)
    candidates = []
    for rec in gallery:
        f = scores[Modality.FACE][rec.subject_id]
        p = scores[Modality.PALM][rec.subject_id]
        candidates.append(
            Candidate(subject_id=rec.subject_id, fused=fusion.fuse(f, p, policy), face=f, palm=p)
        )
    candidates.sort(key=lambda c: (-c.fused, c.subject_id))
    return IdentifyResult(candidates=candidates[: max(1, top)], policy=policy)


# ---------------------------------------------------------------------------
# evaluation and synthesis


def evaluate(
    dataset,
    out_dir,
    config: RunConfig | None = None,
    save_policy_path=None,
) -> EvaluateResult:
    """Run the experiment on an in-memory dataset and write all reports.

    Writes face.csv / palm.csv / fused.csv ROC sweeps plus summary.csv and
    summary.txt into ``out_dir``; optionally persists the tuned policy.
    """
    config = config or RunConfig()
    result = evaluation.run_experiment(dataset, config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_paths = {}
    for name, report in (("face", result.face), ("palm", result.palm), ("fused", result.fused)):
        path = out_dir / f"{name}.csv"
        path.write_text(evaluation.roc_csv(report), encoding="utf-8")
        csv_paths[name] = str(path)
    summary_path = out_dir / "summary.csv"
    summary_path.write_text(evaluation.summary_csv(result), encoding="utf-8")
    csv_paths["summary"] = str(summary_path)
    text = evaluation.summary_table(result)
    (out_dir / "summary.txt").write_text(text, encoding="utf-8")
    policy_path = None
    if save_policy_path:
        store.save_policy(result.policy, save_policy_path)
        policy_path = str(save_policy_path)
    return EvaluateResult(
        experiment=result, summary_text=text, csv_paths=csv_paths, policy_path=policy_path
    )


def evaluate_directory(data_dir, out_dir, config=None, save_policy_path=None) -> EvaluateResult:
    return evaluate(load_dataset(data_dir), out_dir, config, save_policy_path)


def evaluate_synthetic(spec: SynthSpec, out_dir, config=None, save_policy_path=None) -> EvaluateResult:
    return evaluate(evaluation.synthesize_dataset(spec), out_dir, config, save_policy_path)


def synthesize_to_dir(spec: SynthSpec, out_dir) -> SynthResult:
    """Write a synthetic dataset as PGM files plus a manifest."""
    out_dir = Path(out_dir)
    dataset = evaluation.synthesize_dataset(spec)
    rows = []
    written = 0
    for subject in dataset:
        for modality in Modality:
            sub = out_dir / modality.value
            sub.mkdir(parents=True, exist_ok=True)
            for i, img in enumerate(subject.samples(modality)):
                rel = f"{modality.value}/{subject.subject_id}_{i:02d}.pgm"
                imaging.write_pgm(out_dir / rel, img)
                rows.append((subject.subject_id, modality.value, i, rel))
                written += 1
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    writer.writerows(rows)
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(buf.getvalue(), encoding="utf-8")
    return SynthResult(
        out_dir=str(out_dir),
        manifest_path=str(manifest_path),
        images_written=written,
        subjects=spec.subjects,
        samples_per_subject=spec.samples_per_subject,
    )


def load_dataset(data_dir) -> list[SubjectSamples]:
    """Read a manifest dataset back into grayscale sample matrices."""
    entries = _read_manifest(data_dir)
    dataset = []
    for sid in sorted(entries):
        per_modality = {}
        for modality in Modality:
            rows = sorted(entries[sid].get(modality, []))
            images = [imaging.to_grayscale(imaging.load_image(path)) for _, path in rows]
            per_modality[modality] = tuple(images)
        if not per_modality[Modality.FACE] or not per_modality[Modality.PALM]:
            raise DatasetError(f"subject {sid!r} is missing a modality in the manifest")
        dataset.append(
            SubjectSamples(subject_id=sid, face=per_modality[Modality.FACE], palm=per_modality[Modality.PALM])
        )
    if not dataset:
        raise DatasetError(f"no subjects found in {data_dir}")
    return dataset


def _read_manifest(data_dir):
    """Parse manifest.csv under ``data_dir`` (or the given manifest file)."""
    data_dir = Path(data_dir)
    manifest = data_dir / MANIFEST_NAME if data_dir.is_dir() else data_dir
    base = manifest.parent
    if not manifest.is_file():
        raise DatasetError(f"manifest not found: {manifest}")
    entries: dict[str, dict[Modality, list[tuple[int, Path]]]] = {}
    with manifest.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
            raise DatasetError(
                f"{manifest}: first row must be {','.join(MANIFEST_COLUMNS)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DatasetError(f"{manifest}:{lineno}: expected 4 columns, got {len(row)}")
            sid, modality_text, index_text, rel = (c.strip() for c in row)
            try:
                modality = Modality(modality_text)
            except ValueError:
                raise DatasetError(f"{manifest}:{lineno}: unknown modality {modality_text!r}") from None
            try:
                index = int(index_text)
            except ValueError:
                raise DatasetError(f"{manifest}:{lineno}: bad sample_index {index_text!r}") from None
            bucket = entries.setdefault(sid, {}).setdefault(modality, [])
            if any(i == index for i, _ in bucket):
                raise DatasetError(f"{manifest}:{lineno}: duplicate sample_index {index} for {sid}/{modality}")
            bucket.append((index, base / rel))
    if not entries:
        raise DatasetError(f"{manifest}: no data rows")
    return entries
