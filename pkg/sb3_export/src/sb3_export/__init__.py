"""Export stable-baselines3 TD3 checkpoints into vqdistill file formats."""

from .export import ExportManifest, export_dataset, export_weights, scale_action
from .loader import ExportError, MlpNetwork, load_td3_networks

__version__ = "0.1.0"
