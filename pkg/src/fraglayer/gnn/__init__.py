from .data import GraphSample, load_samples, partition_samples, split_by_artboard
from .layers import Arcs, GatLayerParams, GcnLayerParams, gat_layer_forward, gcn_layer_forward
from .model import FragmentDetector, ModelConfig
from .train import Metrics, TrainConfig, TrainResult, evaluate, train

__all__ = [
    "Arcs",
    "FragmentDetector",
    "GatLayerParams",
    "GcnLayerParams",
    "GraphSample",
    "Metrics",
    "ModelConfig",
    "TrainConfig",
    "TrainResult",
    "evaluate",
    "gat_layer_forward",
    "gcn_layer_forward",
    "load_samples",
    "partition_samples",
    "split_by_artboard",
    "train",
]
