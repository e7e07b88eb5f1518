import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pcdtrack.core import (
    Frame,
    FrameParseError,
    FrameValidationError,
    GridSpec,
    GroundTruthFrame,
    PersonState,
    SerializationError,
    read_frames,
    read_ground_truth,
    read_track_file,
    write_frames,
    write_ground_truth,
    write_track_file,
)


def test_read_single_line(tmp_path):
    p = tmp_path / "f.jsonl"
    p.write_text('{"t":0.0,"points":[[1,2,3]]}\n')
    frames = read_frames(p)
    assert len(frames) == 1
    assert frames[0].points.tolist() == [[1.0, 2.0, 3.0]]
    assert frames[0].sensor == "synthetic"


def test_read_empty_file(tmp_path):
    p = tmp_path / "f.jsonl"
    p.write_text("")
    assert read_frames(p) == []


def test_time_reversal_rejected(tmp_path):
    p = tmp_path / "f.jsonl"
    p.write_text('{"t":1.0,"points":[]}\n{"t":0.5,"points":[]}\n')
    with pytest.raises(FrameValidationError):
        read_frames(p)


def test_parse_error_carries_line_number(tmp_path):
    p = tmp_path / "f.jsonl"
    p.write_text('{"t":0.0,"points":[]}\n{"t":0.1,"points":[[1,2]]}\n')
    with pytest.raises(FrameParseError) as exc:
        read_frames(p)
    assert exc.value.lineno == 2
    p.write_text('{"t":0.0,"points":[]}\n{not json\n')
    with pytest.raises(FrameParseError, match="line 2"):
        read_frames(p)


def test_round_trip_three_random_frames(tmp_path):
    rng = np.random.default_rng(0)
    frames = [Frame(0.1 * k, rng.normal(size=(5 + k, 3)), "lidar") for k in range(3)]
    p = tmp_path / "f.jsonl"
    write_frames(frames, p)
    assert read_frames(p) == frames


def test_empty_frame_serializes_empty_list(tmp_path):
    p = tmp_path / "f.jsonl"
    write_frames([Frame(0.0, [])], p)
    assert '"points":[]' in p.read_text()


def test_nan_rejected():
    with pytest.raises(FrameValidationError):
        Frame(0.0, [[np.nan, 0, 0]])
    with pytest.raises(FrameValidationError):
        Frame(np.inf, [])


def test_spherical_frames_not_persisted(tmp_path):
    with pytest.raises(SerializationError):
        write_frames([Frame(0.0, [[1.0, 0.0, 0.0]], spherical=True)], tmp_path / "f.jsonl")


def test_unknown_sensor_and_bad_shape():
    with pytest.raises(FrameValidationError):
        Frame(0.0, [], sensor="radar")
    with pytest.raises(FrameValidationError):
        Frame(0.0, [[1.0, 2.0]])


def test_frame_points_are_read_only():
    f = Frame(0.0, [[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        f.points[0, 0] = 5.0


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(
    st.lists(arrays(np.float64, st.tuples(st.integers(0, 6), st.just(3)), elements=finite), max_size=4),
    st.sampled_from(["lidar", "mmwave", "synthetic"]),
)
def test_round_trip_property(tmp_path_factory, point_sets, sensor):
    frames = [Frame(0.5 * k, pts, sensor) for k, pts in enumerate(point_sets)]
    p = tmp_path_factory.mktemp("rt") / "f.jsonl"
    write_frames(frames, p)
    back = read_frames(p)
    assert back == frames
    for f in back:
        assert np.all(np.isfinite(f.points)) and f.points.shape[1] == 3


def test_ground_truth_round_trip(tmp_path):
    gt = [
        GroundTruthFrame(0.0, (PersonState(0, (1.0, 2.0, 1.55), "walking"),)),
        GroundTruthFrame(0.1, (PersonState(0, (1.1, 2.0, 1.55), "walking"), PersonState(1, (3.0, 4.0, 1.5), "bending"))),
    ]
    p = tmp_path / "gt.jsonl"
    write_ground_truth(gt, p)
    assert read_ground_truth(p) == gt


def test_track_file_round_trip(tmp_path):
    rows = [(0.0, [(0, (1, 2), (0.5, 1.25))]), (0.1, [])]
    p = tmp_path / "t.jsonl"
    write_track_file(rows, p)
    assert read_track_file(p) == rows


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec((0, 0, 0), (0.1, 0.0, 0.1), (2, 2, 2))
    with pytest.raises(ValueError):
        GridSpec((0, 0, 0), 0.1, (2, 0, 2))
    g = GridSpec.from_bounds([0, 0, 0], [1.0, 0.5, 0.3], 0.1)
    assert g.dims == (10, 5, 3)
    idx, inside = g.cell_index([[0.05, 0.05, 0.05], [1.5, 0, 0]])
    assert idx[0].tolist() == [0, 0, 0] and inside.tolist() == [True, False]
    assert np.allclose(g.cell_center([0, 0, 0]), [0.05, 0.05, 0.05])
    assert g.drop_axis(2).dims == (10, 5)
