"""Pydantic request/response models for the HTTP service.

Paths in requests are resolved on the machine the service runs on; the
bundled CLI talks to an in-process app by default, so they are ordinarily
local paths.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..config import (
    DEFAULT_COLS,
    DEFAULT_ENERGY,
    DEFAULT_ROWS,
    DEFAULT_SEED,
    DEFAULT_TOP,
)


class ConfigParams(BaseModel):
    """Numeric knobs accepted by every pipeline endpoint."""

    rows: int = DEFAULT_ROWS
    cols: int = DEFAULT_COLS
    energy: float = DEFAULT_ENERGY
    k: int | None = None
    alpha: float | None = None
    beta: float | None = None
    threshold: float | None = None
    seed: int = DEFAULT_SEED
    top: int = DEFAULT_TOP


class TrainRequest(ConfigParams):
    face_dir: str
    palm_dir: str
    models_dir: str


class ModalityTrainInfo(BaseModel):
    modality: str
    n_pixels: int
    n_images: int
    k: int
    retained_energy: float
    model_path: str
    normalizer_path: str


class TrainResponse(BaseModel):
    face: ModalityTrainInfo
    palm: ModalityTrainInfo
    config: dict


class EnrollRequest(BaseModel):
    models_dir: str
    gallery: str
    data_dir: str | None = None
    subject_id: str | None = None
    face_images: list[str] = Field(default_factory=list)
    palm_images: list[str] = Field(default_factory=list)


class EnrollResponse(BaseModel):
    gallery_path: str
    subjects: int
    samples: int


class VerifyRequest(ConfigParams):
    face_image: str
    palm_image: str
    claimed_id: str
    models_dir: str
    gallery: str
    policy_path: str | None = None


class VerifyResponse(BaseModel):
    claimed_id: str
    verdict: str
    ms_face: float
    ms_palm: float
    ms_final: float
    alpha: float
    beta: float
    threshold: float
    config: dict


class IdentifyRequest(ConfigParams):
    face_image: str
    palm_image: str
    models_dir: str
    gallery: str
    policy_path: str | None = None


class CandidateModel(BaseModel):
    subject_id: str
    fused: float
    face: float
    palm: float


class IdentifyResponse(BaseModel):
    candidates: list[CandidateModel]
    alpha: float
    beta: float
    threshold: float
    config: dict


class SynthParams(BaseModel):
    subjects: int = 40
    samples_per_subject: int = 6
    rows: int = 32
    cols: int = 32
    contrast: float = 0.5
    sigma: float = 0.08
    independent_noise: bool = True
    seed: int = DEFAULT_SEED


class SynthRequest(BaseModel):
    out_dir: str
    spec: SynthParams = Field(default_factory=SynthParams)


class SynthResponse(BaseModel):
    out_dir: str
    manifest_path: str
    images_written: int
    subjects: int
    samples_per_subject: int


class EvaluateRequest(ConfigParams):
    out_dir: str
    data_dir: str | None = None
    synth: SynthParams | None = None
    save_policy: str | None = None


class TraitRow(BaseModel):
    trait: str
    algorithm: str
    far: float
    frr: float
    accuracy: float
    eer: float
    threshold: float


class EvaluateResponse(BaseModel):
    rows: list[TraitRow]
    summary_text: str
    csv_paths: dict[str, str]
    alpha: float
    beta: float
    threshold: float
    weights_clamped: bool
    genuine_trials: int
    impostor_trials: int
    policy_path: str | None
    config: dict


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str
