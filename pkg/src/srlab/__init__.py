"""Patch-based 2x super-resolution with a small perceptron, plus classical baselines."""

from .image_core import downsample_2x, load_image, save_image
from .interp import upscale_bicubic, upscale_bilinear, upscale_fcbi, upscale_icbi, upscale_nearest
from .metrics import mse, psnr, ssim, ssim_rgb
from .mlp import MlpModel, TrainConfig, init_model, load_model, save_model, train

__version__ = "0.1.0"
