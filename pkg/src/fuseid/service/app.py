"""FastAPI application exposing the pipeline."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, evaluation, pipeline
from ..config import RunConfig, resolve_config
from ..errors import FuseIdError, UnknownSubjectError
from ..evaluation import SynthSpec
from . import schemas


def _config_from(params: schemas.ConfigParams) -> RunConfig:
    return resolve_config(
        {
            "rows": params.rows,
            "cols": params.cols,
            "energy": params.energy,
            "k": params.k,
            "alpha": params.alpha,
            "beta": params.beta,
            "threshold": params.threshold,
            "seed": params.seed,
            "top": params.top,
        }
    )


def _synth_spec(params: schemas.SynthParams) -> SynthSpec:
    return SynthSpec(
        subjects=params.subjects,
        samples_per_subject=params.samples_per_subject,
        rows=params.rows,
        cols=params.cols,
        contrast=params.contrast,
        sigma=params.sigma,
        independent_noise=params.independent_noise,
        seed=params.seed,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="fuseid", version=__version__)

    @app.exception_handler(UnknownSubjectError)
    async def _unknown_subject(request: Request, exc: UnknownSubjectError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(FuseIdError)
    async def _domain_error(request: Request, exc: FuseIdError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", service="fuseid", version=__version__)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        config = _config_from(req)
        result = pipeline.train_models(req.face_dir, req.palm_dir, req.models_dir, config)
        return schemas.TrainResponse(
            face=_train_info(result.face),
            palm=_train_info(result.palm),
            config=config.as_dict(),
        )

    @app.post("/enroll", response_model=schemas.EnrollResponse)
    def enroll(req: schemas.EnrollRequest):
        if req.data_dir is not None:
            result = pipeline.enroll_from_manifest(req.data_dir, req.models_dir, req.gallery)
        elif req.subject_id is not None:
            result = pipeline.enroll_subject(
                req.subject_id, req.face_images, req.palm_images, req.models_dir, req.gallery
            )
        else:
            raise FuseIdError("enroll needs either data_dir or subject_id with image lists")
        return schemas.EnrollResponse(
            gallery_path=result.gallery_path, subjects=result.subjects, samples=result.samples
        )

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def verify(req: schemas.VerifyRequest):
        config = _config_from(req)
        policy = pipeline.resolve_policy(req.policy_path, config)
        result = pipeline.verify(
            req.face_image, req.palm_image, req.claimed_id, req.models_dir, req.gallery, policy
        )
        d = result.decision
        return schemas.VerifyResponse(
            claimed_id=result.claimed_id,
            verdict=d.verdict.value,
            ms_face=d.face_score,
            ms_palm=d.palm_score,
            ms_final=d.fused_score,
            alpha=policy.alpha,
            beta=policy.beta,
            threshold=policy.threshold,
            config=config.as_dict(),
        )

    @app.post("/identify", response_model=schemas.IdentifyResponse)
    def identify(req: schemas.IdentifyRequest):
        config = _config_from(req)
        policy = pipeline.resolve_policy(req.policy_path, config)
        result = pipeline.identify(
            req.face_image, req.palm_image, req.models_dir, req.gallery, policy, top=config.top
        )
        return schemas.IdentifyResponse(
            candidates=[
                schemas.CandidateModel(
                    subject_id=c.subject_id, fused=c.fused, face=c.face, palm=c.palm
                )
                for c in result.candidates
            ],
            alpha=policy.alpha,
            beta=policy.beta,
            threshold=policy.threshold,
            config=config.as_dict(),
        )

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        result = pipeline.synthesize_to_dir(_synth_spec(req.spec), req.out_dir)
        return schemas.SynthResponse(
            out_dir=result.out_dir,
            manifest_path=result.manifest_path,
            images_written=result.images_written,
            subjects=result.subjects,
            samples_per_subject=result.samples_per_subject,
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        config = _config_from(req)
        if (req.data_dir is None) == (req.synth is None):
            raise FuseIdError("evaluate needs exactly one of data_dir or synth")
        if req.data_dir is not None:
            result = pipeline.evaluate_directory(req.data_dir, req.out_dir, config, req.save_policy)
        else:
            result = pipeline.evaluate_synthetic(
                _synth_spec(req.synth), req.out_dir, config, req.save_policy
            )
        exp = result.experiment
        rows = []
        for row, report in zip(evaluation.summary_rows(exp), (exp.face, exp.palm, exp.fused)):
            rows.append(
                schemas.TraitRow(
                    trait=row["Trait"],
                    algorithm=row["Algorithm"],
                    far=row["FAR"],
                    frr=row["FRR"],
                    accuracy=row["Accuracy"],
                    eer=report.eer,
                    threshold=report.threshold,
                )
            )
        return schemas.EvaluateResponse(
            rows=rows,
            summary_text=result.summary_text,
            csv_paths=result.csv_paths,
            alpha=exp.policy.alpha,
            beta=exp.policy.beta,
            threshold=exp.policy.threshold,
            weights_clamped=exp.weights_clamped,
            genuine_trials=exp.genuine_trials,
            impostor_trials=exp.impostor_trials,
            policy_path=result.policy_path,
            config=config.as_dict(),
        )

    return app


def _train_info(info) -> schemas.ModalityTrainInfo:
    return schemas.ModalityTrainInfo(
        modality=info.modality.value,
        n_pixels=info.n_pixels,
        n_images=info.n_images,
        k=info.k,
        retained_energy=info.retained_energy,
        model_path=info.model_path,
        normalizer_path=info.normalizer_path,
    )
