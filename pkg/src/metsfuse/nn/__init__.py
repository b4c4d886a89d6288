"""Dense float64 tensors with reverse-mode autodiff, AdamW, and checkpoints."""
from metsfuse.nn.tensor import NonFiniteError, ShapeError, Tape, Tensor
from metsfuse.nn import ops
from metsfuse.nn.optim import AdamW
from metsfuse.nn.gradcheck import GradCheckReport, grad_check
from metsfuse.nn.checkpoint import CheckpointError, read_checkpoint, write_checkpoint

__all__ = [
    "AdamW",
    "CheckpointError",
    "GradCheckReport",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "Tensor",
    "grad_check",
    "ops",
    "read_checkpoint",
    "write_checkpoint",
]
