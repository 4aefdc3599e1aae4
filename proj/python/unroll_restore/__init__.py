"""Image restoration by half-quadratic splitting and its unrolled network."""

from ._core import (
    Denoiser,
    Error,
    FormatError,
    Operator,
    UnrolledNet,
    __version__,
    diagnose_csv,
    gaussian_kernel,
    load_image,
    matched_lambda,
    max_step,
    psnr,
    run_cli,
    save_image,
    solve,
    ssim,
)

__all__ = [
    "Denoiser",
    "Error",
    "FormatError",
    "Operator",
    "UnrolledNet",
    "diagnose_csv",
    "gaussian_kernel",
    "load_image",
    "matched_lambda",
    "max_step",
    "psnr",
    "run_cli",
    "save_image",
    "solve",
    "ssim",
]
