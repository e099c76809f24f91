"""Scene-graph conditioned diffusion policies that compose skills by focusing on relevant objects."""

from .kernels import BACKEND
from .policy import PolicyConfig, PolicyModel, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = ["BACKEND", "PolicyConfig", "PolicyModel", "load_checkpoint", "save_checkpoint", "train", "__version__"]
