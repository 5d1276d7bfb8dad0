"""EDMS layered image codec with encoder-decoder matched segmentation."""

from edms._core import (
    DigestMismatchError,
    SynthHashMismatchError,
    WeightSet,
    decode,
    encode,
    gen_dataset,
    init_weights,
    load_weights,
    ms_ssim,
    psnr,
    save_weights,
    verify_matched,
)

__all__ = [
    "DigestMismatchError",
    "SynthHashMismatchError",
    "WeightSet",
    "decode",
    "encode",
    "gen_dataset",
    "init_weights",
    "load_weights",
    "ms_ssim",
    "psnr",
    "save_weights",
    "verify_matched",
]
