# Quantitative evaluation: PSNR, SSIM, MAE, uncertainty/error correlation and the report tables built from them
# The metrics follow the dominant convention of comparing magnitude images, with the data range taken from the reference

from .metrics import psnr, ssim, mae, pcc, bootstrap_ci, foreground_mask, evaluate_slice, SliceMetrics
from .report import MetricReport
