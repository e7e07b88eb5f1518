from .aohmm import (
    AoHmmTracker,
    Assignment,
    Observation2D,
    TrackerConfig,
    aohmm_decode,
    assign_targets,
    project_to_2d,
)
from .cpda import CpdaParams, Interaction, cpda, find_interactions
from .extract import extract_person_points, split_merged_blob
from .kalman import KalmanConfig, kalman_track
from .statespace import DecodeError, HmmModel, StateSpace, active_states
from .tracks import TrackPoint, TrackSet
from .viterbi import (
    DecodedPath,
    viterbi_adaptive,
    viterbi_core,
    viterbi_first_order,
    viterbi_second_order,
)

__all__ = [
    "AoHmmTracker",
    "Assignment",
    "CpdaParams",
    "DecodeError",
    "DecodedPath",
    "HmmModel",
    "Interaction",
    "KalmanConfig",
    "Observation2D",
    "StateSpace",
    "TrackPoint",
    "TrackSet",
    "TrackerConfig",
    "active_states",
    "aohmm_decode",
    "assign_targets",
    "cpda",
    "extract_person_points",
    "find_interactions",
    "kalman_track",
    "project_to_2d",
    "split_merged_blob",
    "viterbi_adaptive",
    "viterbi_core",
    "viterbi_first_order",
    "viterbi_second_order",
]
