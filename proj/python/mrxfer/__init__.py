"""Python access to the mrxfer C++ library.

Images are complex128 arrays of shape (H, W); coil stacks are (C, H, W);
masks are boolean (H, W).
"""

from ._mrxfer import (
    CascadeModel,
    ConstraintError,
    FormatError,
    NumericalError,
    apply_coils,
    coil_maps,
    convergence_samples,
    cs_reconstruct,
    fft2c,
    generate_mask,
    ifft2c,
    load_array,
    load_mask,
    make_cascade,
    make_phantom,
    psnr,
    run_experiment,
    satisfies_poisson_disc,
    save_array,
    spirit_reconstruct,
    ssim,
    undersample,
)

__all__ = [
    "CascadeModel",
    "ConstraintError",
    "FormatError",
    "NumericalError",
    "apply_coils",
    "coil_maps",
    "convergence_samples",
    "cs_reconstruct",
    "fft2c",
    "generate_mask",
    "ifft2c",
    "load_array",
    "load_mask",
    "make_cascade",
    "make_phantom",
    "psnr",
    "run_experiment",
    "satisfies_poisson_disc",
    "save_array",
    "spirit_reconstruct",
    "ssim",
    "undersample",
]
