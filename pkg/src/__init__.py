from .kspace import ComplexImage, KSpaceData, SamplingMask, CoilSensitivities
from .model import LHAN, ModelConfig
