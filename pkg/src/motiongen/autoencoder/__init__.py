from .losses import (
    VaeLossBreakdown,
    adaptive_gan_weight,
    kl_to_standard_normal,
    l1_reconstruction,
)
from .model import (
    AutoencoderConfig,
    ContentFeatures,
    LatentMotion,
    MotionContentAutoencoder,
    MotionPosterior,
    normalize_latent,
    reparameterize,
)
from .perceptual import PerceptualLoss, perceptual_distance
from .training import TrainingDiverged, VaeTrainer

__all__ = [
    "AutoencoderConfig", "ContentFeatures", "LatentMotion", "MotionContentAutoencoder",
    "MotionPosterior", "PerceptualLoss", "TrainingDiverged", "VaeLossBreakdown",
    "VaeTrainer", "adaptive_gan_weight", "kl_to_standard_normal", "l1_reconstruction",
    "normalize_latent", "perceptual_distance", "reparameterize",
]
