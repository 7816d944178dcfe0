"""kinseg: action segmentation for multi-sensor kinematic time series.

Multi-stage temporal-convolutional prediction generator with intra-stage
regularization heads, bidirectional RNN refinement, geometry-aware data
augmentations (world-frame rotation, hand inversion), the preprocessing
chain, and the standard frame-wise/segmental metric suite.
"""

__version__ = "0.1.0"
