from .losses import LossWeights, BranchOutputs, LossBreakdown, loss_dm, loss_ic, loss_kc, total_loss, combine_losses, masked_mean
from .trainer import TrainConfig, TrainResult, TrainingDiverged, train, train_step, make_optimizer
