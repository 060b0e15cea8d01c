"""volstream: selective multi-camera RGB-D volumetric streaming.

Pipeline: multi-camera self-calibration -> tile-level optical-flow change
detection -> selective point-cloud reconstruction -> viewport-adaptive,
bandwidth-throttled transmission, plus an evaluation harness.
"""

__version__ = "0.1.0"
