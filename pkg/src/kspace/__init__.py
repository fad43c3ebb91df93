# Complex image / k-space algebra: Fourier operators, coils, sampling masks and the partition split

from .fourier import fft2c, ifft2c, complex_to_channels, channels_to_complex
from .coils import apply_coils, combine_coils, normalize_coils
from .types import ComplexImage, KSpaceData, SamplingMask, CoilSensitivities
from .mask import generate_vd_mask, partition_masks, acs_block
from .ops import undersample, partition_kspace, zero_fill_recon, zero_fill, forward_model, simulate_acquisition
