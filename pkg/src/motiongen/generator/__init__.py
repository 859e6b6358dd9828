from .conditioning import ConditionBundle, ConditionEncoder
from .sampling import CallCounter, sample_motion, sample_motion_batch
from .training import DiffusionTrainer, TrainingDiverged, noise_prediction_loss, q_sample_batch
from .unet import EpsNetConfig, NoiseUNet, timestep_embedding

__all__ = [
    "CallCounter", "ConditionBundle", "ConditionEncoder", "DiffusionTrainer",
    "EpsNetConfig", "NoiseUNet", "TrainingDiverged", "noise_prediction_loss",
    "q_sample_batch", "sample_motion", "sample_motion_batch", "timestep_embedding",
]
