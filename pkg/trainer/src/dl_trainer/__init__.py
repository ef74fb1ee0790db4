"""U-Net trainer for flood-mask crop datasets.

Consumes the pipeline's exported dataset directories (FGRID crops plus
manifest.json) and writes masks and metrics in the same formats.
"""

__version__ = "0.1.0"

from .data import ConfigError, UnetConfig, load_dataset  # noqa: F401
from .losses import dice_loss  # noqa: F401
from .model import ResUNet, build_unet  # noqa: F401
from .train import load_model, train  # noqa: F401
from .predict import predict_dataset, predict_raster  # noqa: F401
from .evaluate import evaluate  # noqa: F401
