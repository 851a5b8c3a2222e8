"""Face detection from facial-segment proposals.

Weak boosted segment detectors feed a cluster-and-subset proposal generator;
two classifiers score the proposals: SegFace (HoG + linear SVMs + prior
features) and DeepSegFace (multi-column convolutional network with prior
re-ranking). An evaluation harness measures TAR@FAR, recall@precision and
the proposal-coverage upper bound at the 50% overlap criterion.
"""

from .imaging import BoxI, GrayImageF, Image
from .segments import SegmentDetection, SegmentKind, SegmentLayout, default_layout

__all__ = [
    "BoxI",
    "GrayImageF",
    "Image",
    "SegmentDetection",
    "SegmentKind",
    "SegmentLayout",
    "default_layout",
]

__version__ = "0.1.0"
