"""Gradual-residual image denoiser for Gaussian and Poisson noise."""

from ._core import (
    Error,
    FormatError,
    InvalidArgument,
    Model,
    ShapeError,
    corrupt,
    load_image,
    parameter_count,
    psnr,
    run_cli,
    save_image,
    synth_scenes,
)

__all__ = [
    "Error",
    "FormatError",
    "InvalidArgument",
    "Model",
    "ShapeError",
    "corrupt",
    "load_image",
    "parameter_count",
    "psnr",
    "run_cli",
    "save_image",
    "synth_scenes",
]
