"""Unsupervised radio-map construction from CSI along an unknown walking trajectory."""
from .channel import CsiMatrix, RadioConfig, simulate_csi, synth_csi, synth_paths
from .features import FeatureSet, FeatureVec, extract, extract_all, music_aod
from .localize import EvalReport, KnnLocalizer, RadioMap, evaluate, ml_localize, ml_localize_all, wcl
from .scene import AccessPoint, Bounds, Environment, MobilityParams, Obstacle, Trajectory, load_scene

__version__ = "0.1.0"
