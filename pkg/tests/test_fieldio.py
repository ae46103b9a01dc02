import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fpcap.fieldio import FieldFormatError, decode_field, encode_field, field_csv


@settings(max_examples=40)
@given(values=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                     elements=st.floats(allow_nan=False, width=64)),
       h=st.floats(1e-4, 1.0), role=st.sampled_from(["h", "h_dag", "w"]))
def test_round_trip(values, h, role):
    origin = np.array([-1.5, 0.25])
    out, o, hh, r = decode_field(encode_field(values, origin, h, role))
    np.testing.assert_array_equal(out, values)
    np.testing.assert_array_equal(o, origin)
    assert hh == h and r == role


def test_header_layout():
    data = encode_field(np.zeros((2, 3)), [0.0, 1.0], 0.5, "h")
    assert data[:4] == b"FPCG"
    assert len(data) == 4 + 8 + 2 * 8 + 8 + 2 * 8 + 16 + 6 * 8


def test_corrupt_streams_are_rejected():
    data = encode_field(np.ones(5), [0.0], 0.1, "w")
    with pytest.raises(FieldFormatError, match="magic"):
        decode_field(b"XXXX" + data[4:])
    with pytest.raises(FieldFormatError, match="size"):
        decode_field(data[:-8])
    with pytest.raises(FieldFormatError, match="version"):
        decode_field(data[:4] + (2).to_bytes(4, "little") + data[8:])


def test_bad_arguments():
    with pytest.raises(ValueError):
        encode_field(np.ones((2, 2)), [0.0], 0.1, "h")
    with pytest.raises(ValueError):
        encode_field(np.ones(2), [0.0], 0.1, "x" * 17)


def test_csv_columns_and_coordinates():
    text = field_csv(np.arange(6.0).reshape(2, 3), [1.0, -1.0], 0.5)
    lines = text.splitlines()
    assert lines[0] == "z0,z1,value"
    assert len(lines) == 7
    assert lines[1] == "1.0,-1.0,0.0"
    assert lines[6] == "1.5,0.0,5.0"
