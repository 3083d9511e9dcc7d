"""morphkit: feed-forward image morphing distilled from a generative teacher.

A student generator learns a teacher model's latent-space interpolation
from sampled triplets, with content and style controlled independently
at inference time.
"""

from .config import LossWeights, ModelConfig, TrainConfig, build_teacher, resolve_preset
from .engine import MorphModel, MorphParams, truncate_params
from .images import decode_png, encode_png, load_png, montage, resample, save_png
from .metrics import (
    DiscriminatorFeatures,
    EvalReport,
    FeatureStats,
    evaluate_morphs,
    evaluate_reconstruction,
    feature_stats,
    fid,
    mse,
    psnr,
    ssim,
)
from .networks import (
    MorphGenerator,
    MultiTaskDiscriminator,
    build_discriminator,
    build_generator,
    lerp,
)
from .objectives import LossReport, TripletBatch, full_objective
from .teacher import ProceduralTeacher, TeacherLatent, TeacherModel, TrainingTriplet, lerp_latent
from .training import TrainState, Trainer, TrainingDiverged, build_train_state, train, train_step

__version__ = "0.1.0"

__all__ = [
    "DiscriminatorFeatures",
    "EvalReport",
    "FeatureStats",
    "LossReport",
    "LossWeights",
    "ModelConfig",
    "MorphGenerator",
    "MorphModel",
    "MorphParams",
    "MultiTaskDiscriminator",
    "ProceduralTeacher",
    "TeacherLatent",
    "TeacherModel",
    "TrainConfig",
    "TrainState",
    "Trainer",
    "TrainingDiverged",
    "TrainingTriplet",
    "TripletBatch",
    "build_discriminator",
    "build_generator",
    "build_teacher",
    "build_train_state",
    "decode_png",
    "encode_png",
    "evaluate_morphs",
    "evaluate_reconstruction",
    "feature_stats",
    "fid",
    "full_objective",
    "lerp",
    "lerp_latent",
    "load_png",
    "montage",
    "mse",
    "psnr",
    "resample",
    "resolve_preset",
    "save_png",
    "ssim",
    "train",
    "train_step",
    "truncate_params",
]
