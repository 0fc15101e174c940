"""Poisson image denoising: noise synthesis, Anscombe VST, a from-scratch
two-branch convolutional autoencoder, patch-based reconstruction, and a
statistical evaluation harness."""

from .image_io import (GrayImage, ImageFormatError, TruncatedDataError,
                       load_grayscale, save_grayscale, scale_to_peak)
from .model import (NetworkConfig, Network, TrainReport, build_network,
                    denoise_image, forward_full, load_network, save_network,
                    train)
from .noise import (anscombe_forward, anscombe_inverse_naive,
                    anscombe_inverse_unbiased, corrupt_image,
                    gaussian_blur_denoiser, poisson_field, poisson_sample,
                    vst_denoise_pipeline)
from .patches import (PatchDataset, PatchGrid, build_dataset, extract_grid,
                      gaussian_weight_map, load_dataset,
                      reconstruct_from_patches, sample_random_patches,
                      save_dataset, split_counts)
from .stats import (EvalReport, evaluate_suite, paired_t_test, psnr,
                    psnr_images, snr_theoretical)

__version__ = "0.1.0"
