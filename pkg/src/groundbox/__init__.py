"""Toolkit for question-to-region grounding pipelines.

Provides exact integer bounding-box geometry, dataset/detection/prediction
file plumbing, synthetic dataset forging from detector outputs, prompt
templating, candidate-box replacement and fold ensembling, IoU scoring,
and a deterministic mock model adapter, wired together by the ``groundbox``
command-line tool.
"""

from groundbox.geometry import BBox, ImageDims

__version__ = "0.1.0"

__all__ = ["BBox", "ImageDims", "__version__"]
