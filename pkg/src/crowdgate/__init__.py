"""Real-time crowd moderation of streaming video timelines.

Videos are cut into judgeable segments, each segment is judged yes/no by a
quorum of crowd workers, votes are aggregated with reliability weighting, and
a video publishes only if every segment is judged safe.
"""

from .assigner import AssignmentPolicy, GoldItem
from .judgment import JudgmentPolicy
from .model import SegmentTask, VideoCase, Vote, WorkerProfile
from .pipeline import ModerationEngine, PipelineConfig, RequestError, open_engine
from .segmenter import SegmentationPolicy, segment_timeline
from .sim import Scenario, SimStreamModel, SimWorker, SimWorkerModel, run_simulation

__all__ = [
    "AssignmentPolicy",
    "GoldItem",
    "JudgmentPolicy",
    "ModerationEngine",
    "PipelineConfig",
    "RequestError",
    "Scenario",
    "SegmentTask",
    "SegmentationPolicy",
    "SimStreamModel",
    "SimWorker",
    "SimWorkerModel",
    "VideoCase",
    "Vote",
    "WorkerProfile",
    "open_engine",
    "run_simulation",
    "segment_timeline",
]

__version__ = "0.1.0"
