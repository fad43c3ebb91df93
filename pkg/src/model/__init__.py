# The learnable reconstruction network and everything around it

from .pab import PAB, symmetric_activation, pab_forward
from .time_mlp import TimeMLP, time_embed
from .catb import CATB, catb_forward
from .lhan import LHAN, ModelConfig, lhan_forward, count_parameters, parameter_breakdown
from .dc import dc_layer
from .backbone import backbone_reconstruct
from .checkpoint import save_checkpoint, load_checkpoint, read_header, Checkpoint, CheckpointError
