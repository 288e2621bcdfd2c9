"""Multi-column inpainting generator with ID-MRF and confidence-driven losses.

Images are numpy uint8 arrays shaped (h, w) or (h, w, 3). Masks are (h, w)
arrays where nonzero marks an unknown pixel.
"""

from ._gmcnn import (
    CheckpointError,
    Generator,
    NonFiniteLoss,
    gaussian_kernel,
    normalize_config,
    num_threads,
    propagate_confidence,
    psnr,
    read_png,
    sample_mask,
    selftest,
    set_num_threads,
    ssim,
    synthetic_textures,
    train,
    write_png,
)

__all__ = [
    "CheckpointError",
    "Generator",
    "NonFiniteLoss",
    "gaussian_kernel",
    "normalize_config",
    "num_threads",
    "propagate_confidence",
    "psnr",
    "read_png",
    "sample_mask",
    "selftest",
    "set_num_threads",
    "ssim",
    "synthetic_textures",
    "train",
    "write_png",
]
