"""aoiseg: grid AOI segmentation via a border-cell MDP and Double DQN,
with synthetic benchmarks, baselines, metrics and an experiment CLI."""

__version__ = "0.1.0"

from .grid import RoadMask, SegmentationMap, TransferGraph, Trajectory  # noqa: F401
