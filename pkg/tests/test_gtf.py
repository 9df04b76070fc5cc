import io
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from rainkit.gtf import FormatError, HEADER_SIZE, decode, encode, read_grid_file, write_grid_file

finite_f32 = st.floats(width=32, allow_nan=False, allow_infinity=False)
grids = hnp.arrays(
    np.float32,
    st.one_of(hnp.array_shapes(min_dims=2, max_dims=2, max_side=9), hnp.array_shapes(min_dims=3, max_dims=3, max_side=6)),
    elements=finite_f32,
)


def test_zero_field_round_trip(tmp_path):
    field = np.zeros((64, 64), dtype=np.float32)
    write_grid_file(field, tmp_path / "z.gtf")
    back = read_grid_file(tmp_path / "z.gtf")
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, field)


def test_cube_file_size_matches_header_layout(tmp_path):
    # magic (4) + rank (4) + three u32 dims + float32 payload
    cube = np.ones((57, 64, 64), dtype=np.float32)
    write_grid_file(cube, tmp_path / "c.gtf")
    assert (tmp_path / "c.gtf").stat().st_size == 8 + 4 * 3 + 4 * 57 * 64 * 64


def test_header_bytes_are_little_endian():
    blob = encode(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert blob[:4] == b"GTF1"
    assert struct.unpack("<III", blob[4:16]) == (2, 2, 3)
    assert struct.unpack("<6f", blob[16:]) == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)


def test_channel_axis_is_slowest():
    cube = np.arange(2 * 2 * 2, dtype=np.float32).reshape(2, 2, 2)
    values = struct.unpack("<8f", encode(cube)[HEADER_SIZE + 12 :])
    assert values[:4] == (0.0, 1.0, 2.0, 3.0)  # all of channel 0 first


def test_bad_magic_reports_offset_zero(tmp_path):
    blob = b"XXXX" + encode(np.zeros((2, 2), np.float32))[4:]
    (tmp_path / "bad.gtf").write_bytes(blob)
    with pytest.raises(FormatError) as err:
        read_grid_file(tmp_path / "bad.gtf")
    assert err.value.offset == 0


def test_truncated_payload_offset():
    blob = encode(np.zeros((3, 3), np.float32))[:-5]
    with pytest.raises(FormatError) as err:
        decode(blob)
    assert err.value.offset == len(blob)


@pytest.mark.parametrize("rank", [0, 1, 4])
def test_unsupported_rank(rank):
    blob = b"GTF1" + struct.pack("<I", rank) + struct.pack(f"<{rank}I", *([2] * rank))
    with pytest.raises(FormatError) as err:
        decode(blob)
    assert err.value.offset == 4


def test_dimension_overflow():
    blob = b"GTF1" + struct.pack("<III", 2, 2**20, 2**20)
    with pytest.raises(FormatError, match="overflow"):
        decode(blob)


def test_zero_dimension_rejected():
    with pytest.raises(FormatError):
        decode(b"GTF1" + struct.pack("<III", 2, 0, 4))
    with pytest.raises(ValueError):
        encode(np.zeros((0, 3), np.float32))


def test_trailing_bytes_rejected(tmp_path):
    (tmp_path / "t.gtf").write_bytes(encode(np.ones((2, 2), np.float32)) + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        read_grid_file(tmp_path / "t.gtf")


def test_truncated_header():
    with pytest.raises(FormatError) as err:
        decode(b"GTF1\x02")
    assert err.value.offset == 5


def test_writer_rejects_rank_one():
    with pytest.raises(ValueError):
        encode(np.zeros(5, np.float32))


@given(grids)
def test_round_trip_is_bit_exact(arr):
    back = decode(encode(arr))
    assert back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()


def test_consecutive_records_in_one_stream():
    from rainkit.gtf import read_from

    a = np.ones((2, 3), np.float32)
    b = np.full((1, 2, 2), 7, np.float32)
    stream = io.BytesIO(encode(a) + encode(b))
    np.testing.assert_array_equal(read_from(stream), a)
    np.testing.assert_array_equal(read_from(stream, stream.tell()), b)
