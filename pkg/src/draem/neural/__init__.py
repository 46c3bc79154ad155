from .checkpoint import ArchitectureMismatchError, Checkpoint, CheckpointError, checkpoint_load, checkpoint_save
from .networks import (
    ArchitectureSpec,
    DiscriminativeNet,
    DraemModel,
    ReconstructiveNet,
    anomaly_probability,
    backward,
    build_model,
    forward_discriminative,
    forward_reconstructive,
)
from .optim import Adam, NonFiniteGradientError, lr_at, optimizer_step
