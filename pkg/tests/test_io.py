import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sparse_ppf import io as sio
from sparse_ppf.model import SpikeTrain, StimulusSequence
from sparse_ppf.strf import Spectrogram

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(arrays(np.int8, st.integers(1, 50), elements=st.integers(0, 1)), st.floats(1e-5, 1.0))
def test_spike_round_trip(tmp_path_factory, bins, delta):
    p = tmp_path_factory.mktemp("io") / "spikes.txt"
    sio.write_spikes(p, SpikeTrain(bins, delta))
    back = sio.read_spikes(p)
    np.testing.assert_array_equal(back.bins, bins)
    assert back.delta == delta


@given(arrays(float, st.integers(1, 40), elements=finite), st.data())
def test_stimulus_round_trip_is_bit_exact(tmp_path_factory, vals, data):
    pad = data.draw(st.integers(0, vals.shape[0]))
    p = tmp_path_factory.mktemp("io") / "stim.txt"
    sio.write_stimulus(p, StimulusSequence(vals, pad))
    back = sio.read_stimulus(p)
    np.testing.assert_array_equal(back.values, vals)
    assert back.pad == pad


def test_spectrogram_round_trip(tmp_path, rng):
    spec = Spectrogram(rng.normal(size=(3, 7)), 2e-3, 200.0, 8000.0, "linear")
    sio.write_spectrogram(tmp_path / "s.csv", spec)
    back = sio.read_spectrogram(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.values, spec.values)
    assert (back.delta, back.f_lo, back.f_hi, back.scale) == (2e-3, 200.0, 8000.0, "linear")


def test_spectrogram_shape_mismatch(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# J=2\n# T=3\n# delta=0.001\n# f_lo=500.0\n# f_hi=16000.0\n1,2\n3,4\n")
    with pytest.raises(ValueError, match="header says"):
        sio.read_spectrogram(p)
    p.write_text("# J=2\n1,2\n")
    with pytest.raises(ValueError, match="missing"):
        sio.read_spectrogram(p)


def test_spike_file_needs_header(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("0\n1\n")
    with pytest.raises(ValueError):
        sio.read_spikes(p)
    p.write_text("# nothing\n0\n1\n")
    with pytest.raises(ValueError, match="delta"):
        sio.read_spikes(p)


def test_tables_are_schema_tagged_and_exact(tmp_path):
    p = tmp_path / "t.csv"
    sio.write_series(p, "curves", {"a": (np.array([1, 2]), np.array([0.1, 1 / 3]))})
    schema, cols, rows = sio.read_table(p)
    assert schema == "sparse_ppf/curves/v1"
    assert tuple(cols) == sio.SERIES_COLUMNS
    assert rows[1] == ["2", "a", repr(1 / 3)]
    assert float(rows[1][2]) == 1 / 3
    sio.write_matrix(p, "m", np.eye(2))
    assert sio.read_table(p)[1] == ["c0", "c1"]
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        sio.read_table(tmp_path / "bad.csv")


def test_ensure_dir(tmp_path):
    d = tmp_path / "a" / "b"
    assert sio.ensure_dir(d) == str(d) and d.is_dir()
    sio.ensure_dir(d)
