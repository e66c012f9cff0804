import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotp_lab.codec import (
    UNUSED,
    AddressItem,
    AnyPointer,
    ElemType,
    EncodeError,
    FrameError,
    IncompleteFrame,
    InvalidPointer,
    MalformedFrame,
    MessageKind,
    PointerSyntaxError,
    ProtocolMessage,
    ResultItem,
    ReturnCode,
    decode_any_pointer,
    decode_pdu,
    describe_frame,
    encode_any_pointer,
    encode_pdu,
    format_pointer_literal,
    iter_frames,
    parse_pointer_literal,
    protocol_error_response,
    split_frame,
)
from strategies import any_pointers, messages

# Hand-encoded frames: 2-byte length, "LP", version, kind, seq(2), count, items.
READ_DB99 = bytes.fromhex("000f" "4c50" "01" "01" "0001" "01" "02" "0063" "000000" "0001")
WRITE_RESP_EMPTY = bytes.fromhex("0007" "4c50" "01" "85" "0007" "00")
READ_RESP_5A = bytes.fromhex("000b" "4c50" "01" "81" "0001" "01" "ff" "0001" "5a")


class TestFrames:
    def test_read_request_layout(self):
        msg = ProtocolMessage(MessageKind.READ_REQUEST, 1, (AddressItem(99, 0, 1),))
        assert encode_pdu(msg) == READ_DB99
        assert decode_pdu(READ_DB99) == msg

    def test_empty_write_response_is_shortest_frame(self):
        msg = ProtocolMessage(MessageKind.WRITE_RESPONSE, 7, ())
        assert encode_pdu(msg) == WRITE_RESP_EMPTY
        assert encode_pdu(msg)[-1] == 0x00

    def test_read_response_success_code(self):
        frame = encode_pdu(ProtocolMessage(MessageKind.READ_RESPONSE, 1, (ResultItem(ReturnCode.SUCCESS, b"\x5a"),)))
        assert frame == READ_RESP_5A

    def test_write_request_carries_payload(self):
        item = AddressItem(12, 18, 10, data=bytes(range(10)))
        frame = encode_pdu(ProtocolMessage(MessageKind.WRITE_REQUEST, 3, (item,)))
        # bit address 18*8 = 144 = 0x000090
        assert frame[9:17] == bytes.fromhex("02" "000c" "000090" "000a")
        assert frame.endswith(bytes(range(10)))
        assert decode_pdu(frame).items[0] == item

    def test_bit_item(self):
        item = AddressItem(100, 0, 1, 3, True)
        frame = encode_pdu(ProtocolMessage(MessageKind.READ_REQUEST, 9, (item,)))
        assert frame[9] == 0x01 and frame[12:15] == b"\x00\x00\x03"
        assert decode_pdu(frame).items == (item,)

    def test_bad_magic(self):
        with pytest.raises(MalformedFrame):
            decode_pdu(READ_DB99[:2] + b"\x00\x00" + READ_DB99[4:])

    @pytest.mark.parametrize("offset,value", [(4, 0x02), (5, 0x03), (5, 0x80)])
    def test_bad_version_or_kind(self, offset, value):
        frame = bytearray(READ_DB99)
        frame[offset] = value
        with pytest.raises(MalformedFrame):
            decode_pdu(bytes(frame))

    def test_truncated_is_incomplete(self):
        with pytest.raises(IncompleteFrame) as info:
            decode_pdu(READ_DB99[:-3])
        assert info.value.needed == len(READ_DB99)
        with pytest.raises(IncompleteFrame):
            decode_pdu(b"\x00")

    def test_incomplete_and_malformed_are_distinct(self):
        assert not issubclass(IncompleteFrame, MalformedFrame)
        assert issubclass(IncompleteFrame, FrameError) and issubclass(MalformedFrame, FrameError)

    def test_trailing_bytes_rejected(self):
        with pytest.raises(MalformedFrame):
            decode_pdu(READ_DB99 + b"\x00")

    def test_length_prefix_inconsistent_with_items(self):
        body = READ_DB99[2:-1]
        with pytest.raises(MalformedFrame):
            decode_pdu(struct.pack(">H", len(body)) + body)

    def test_too_many_items(self):
        msg = ProtocolMessage(MessageKind.READ_REQUEST, 1, tuple(AddressItem(1, i) for i in range(256)))
        with pytest.raises(EncodeError):
            encode_pdu(msg)
        encode_pdu(ProtocolMessage(MessageKind.READ_REQUEST, 1, msg.items[:255]))

    def test_item_type_must_match_kind(self):
        with pytest.raises(EncodeError):
            encode_pdu(ProtocolMessage(MessageKind.READ_REQUEST, 1, (ResultItem(ReturnCode.SUCCESS),)))
        with pytest.raises(EncodeError):
            encode_pdu(ProtocolMessage(MessageKind.WRITE_REQUEST, 1, (AddressItem(1, 0, 2, data=b"x"),)))

    def test_protocol_error_response(self):
        msg = protocol_error_response(MessageKind.WRITE_REQUEST)
        assert msg.kind is MessageKind.WRITE_RESPONSE and msg.is_protocol_error
        assert decode_pdu(encode_pdu(msg)).is_protocol_error

    def test_describe(self):
        text = describe_frame(READ_DB99)
        assert "READ_REQUEST" in text and "DB99.DBX0.0" in text

    @settings(max_examples=300)
    @given(messages())
    def test_round_trip(self, msg):
        assert decode_pdu(encode_pdu(msg)) == msg

    @settings(max_examples=100)
    @given(st.lists(messages(), max_size=5))
    def test_concatenated_frames(self, msgs):
        stream = b"".join(encode_pdu(m) for m in msgs)
        assert list(iter_frames(stream)) == msgs

    def test_split_frame_leaves_partial_tail(self):
        msg, rest = split_frame(READ_DB99 + READ_RESP_5A[:5])
        assert msg.sequence == 1 and rest == READ_RESP_5A[:5]
        with pytest.raises(IncompleteFrame):
            split_frame(rest)

    @settings(max_examples=500)
    @given(st.binary(max_size=80))
    def test_fuzz_decode_classifies(self, blob):
        try:
            decode_pdu(blob)
        except FrameError:
            pass

    @settings(max_examples=300)
    @given(messages(), st.integers(0, 200), st.integers(0, 255))
    def test_fuzz_mutated_frames(self, msg, pos, value):
        frame = bytearray(encode_pdu(msg))
        frame[pos % len(frame)] = value
        try:
            decode_pdu(bytes(frame))
        except FrameError:
            pass


class TestPointers:
    def test_byte_pointer_layout(self):
        p = AnyPointer(1, 0, 0, ElemType.BYTE, 1)
        assert encode_any_pointer(p) == bytes.fromhex("10 02 0001 0001 84 000000")

    def test_word_pointer_bit_address(self):
        p = parse_pointer_literal("P#DB12.DBX4.0 WORD 1")
        assert encode_any_pointer(p) == bytes.fromhex("10 04 0001 000C 84 000020")

    def test_decode_inverse(self):
        assert decode_any_pointer(bytes.fromhex("10020001000184000000")) == AnyPointer(1, 0, 0, ElemType.BYTE, 1)

    def test_unused(self):
        assert decode_any_pointer(bytes(10)) is UNUSED
        assert encode_any_pointer(UNUSED) == bytes(10)

    @pytest.mark.parametrize(
        "raw",
        ["11020001000184000000", "10030001000184000000", "10020001000183000000", "10020000000184000000"],
    )
    def test_invalid(self, raw):
        out = decode_any_pointer(bytes.fromhex(raw))
        assert isinstance(out, InvalidPointer) and out.reason

    def test_wrong_length_is_usage_error(self):
        with pytest.raises(ValueError):
            decode_any_pointer(bytes(9))

    def test_sizes(self):
        assert AnyPointer(1, 0, 0, ElemType.INT, 3).total_bytes == 6
        assert AnyPointer(1, 0, 0, ElemType.REAL, 2).total_bytes == 8
        assert AnyPointer(1, 0, 5, ElemType.BIT, 4).total_bits == 4
        assert AnyPointer(1, 0, 5, ElemType.BIT, 4).total_bytes == 1
        assert AnyPointer(1, 0, 0, ElemType.BIT, 9).total_bytes == 2

    def test_bit_offset_only_for_bits(self):
        with pytest.raises(ValueError):
            AnyPointer(1, 0, 3, ElemType.BYTE, 1)

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("P#DB1.DBX0.0 INT 1", AnyPointer(1, 0, 0, ElemType.INT, 1)),
            ("P#DB100.DBX1.0 INT 1", AnyPointer(100, 1, 0, ElemType.INT, 1)),
            ("p#db5.dbx2.7 bit 1", AnyPointer(5, 2, 7, ElemType.BIT, 1)),
            ("P#DB9.DBX8.0  DWORD   2", AnyPointer(9, 8, 0, ElemType.DWORD, 2)),
        ],
    )
    def test_literals(self, text, expected):
        assert parse_pointer_literal(text) == expected

    @pytest.mark.parametrize("text", ["P#DB1", "P#DB1.DBX0.0", "P#DB1.DBX0.8 BIT 1", "P#DB1.DBX0.0 CHAR 1", "DB1.DBX0.0 INT 1"])
    def test_bad_literals(self, text):
        with pytest.raises(PointerSyntaxError) as info:
            parse_pointer_literal(text)
        assert 0 <= info.value.position <= len(text)

    def test_bad_literal_position(self):
        with pytest.raises(PointerSyntaxError) as info:
            parse_pointer_literal("P#DB1")
        assert info.value.position == 5

    @settings(max_examples=300)
    @given(any_pointers())
    def test_binary_round_trip(self, p):
        raw = encode_any_pointer(p)
        assert len(raw) == 10 and decode_any_pointer(raw) == p

    @settings(max_examples=300)
    @given(any_pointers())
    def test_literal_round_trip(self, p):
        text = format_pointer_literal(p)
        assert parse_pointer_literal(text) == p
        assert str(p) == text

    @given(st.binary(min_size=10, max_size=10))
    def test_decode_any_ten_bytes(self, raw):
        out = decode_any_pointer(raw)
        if isinstance(out, AnyPointer):
            assert encode_any_pointer(out) == raw
