from .model import GenConfig, edge_logits, init_params, param_shapes, predict_x0
from .schedule import NoiseSchedule, forward_noise
from .train import ModelParams, make_batch, predict_edges, sample, train, train_step

__all__ = [
    "GenConfig",
    "ModelParams",
    "NoiseSchedule",
    "edge_logits",
    "forward_noise",
    "init_params",
    "make_batch",
    "param_shapes",
    "predict_edges",
    "predict_x0",
    "sample",
    "train",
    "train_step",
]
