"""Generative Anchored Fields: twin endpoint predictors and transport algebra on 2D data."""

from ._gaf import (
    ConfigError,
    Dataset,
    GafError,
    Model,
    ModelConfig,
    NonFiniteError,
    ShapeError,
    TrainConfig,
    __version__,
    energy_distance,
    latents,
    load_dataset,
    load_model,
    make_dataset,
    run,
    sliced_wasserstein,
    square_to_simplex,
    train,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "GafError",
    "Model",
    "ModelConfig",
    "NonFiniteError",
    "ShapeError",
    "TrainConfig",
    "__version__",
    "energy_distance",
    "latents",
    "load_dataset",
    "load_model",
    "make_dataset",
    "run",
    "sliced_wasserstein",
    "square_to_simplex",
    "train",
]
