"""Transmission layer: wire codec, token-bucket throttling, bandwidth-driven
adaptation, per-client sessions, and metrics."""

from .adapt import (BandwidthController, ThetaCurve, calibrate_theta_anchors,
                    DEFAULT_BANDWIDTH_ANCHORS_BPS, DEFAULT_BUDGET_ANCHORS,
                    DEFAULT_REUSE_TARGETS)
from .clock import Clock, VirtualClock, WallClock
from .metrics import SessionMetrics
from .session import (ClientCache, ScriptedClient, ScriptedViewpoint,
                      SessionConfig, SessionCore, SimNetwork, SimResult,
                      run_simulation)
from .throttle import SendReceipt, TokenBucket
from .wire import (ACTION_REPLACE, ACTION_REUSE, Ack, Hello, SceneUpdate,
                   SegmentRecord, Stats, ViewportFeedback, decode, encode)

__all__ = [
    "ACTION_REPLACE", "ACTION_REUSE", "Ack", "BandwidthController",
    "ClientCache", "Clock", "DEFAULT_BANDWIDTH_ANCHORS_BPS",
    "DEFAULT_BUDGET_ANCHORS", "DEFAULT_REUSE_TARGETS", "Hello", "SceneUpdate",
    "ScriptedClient", "ScriptedViewpoint", "SegmentRecord", "SendReceipt",
    "SessionConfig", "SessionCore", "SessionMetrics", "SimNetwork",
    "SimResult", "Stats", "ThetaCurve", "TokenBucket", "ViewportFeedback",
    "VirtualClock", "WallClock", "calibrate_theta_anchors", "decode", "encode",
    "run_simulation",
]
