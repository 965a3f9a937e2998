import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from physflow import errors
from physflow.scene import ConditioningFrame
from physflow.stream import protocol as proto


def all_message_samples():
    rng = np.random.default_rng(0)
    return [
        proto.ActionPointForceMsg((1.0, 2.0, 3.0), (0.0, 0.0, 1.0), 0.5, 0.25),
        proto.ActionForceFieldMsg((3.0, 0.0, 0.0), False, (0.0,) * 6),
        proto.ActionForceFieldMsg((0.0, -1.0, 0.0), True, (0.0, 0.0, 0.0, 1.0, 1.0, 1.0)),
        proto.ActionGripperMsg((0.1, 0.2, 0.3), (1.0, 0.0, 0.0, 0.0), 0.75),
        proto.ActionCameraMsg((1.0, 0, 0, 0, 1, 0, 0, 0, 1), (0.0, 0.0, 0.0)),
        proto.FramePreviewMsg(7, 0.07, 4, 2, rng.integers(0, 255, 4 * 2 * 3, dtype=np.uint8)),
        proto.FrameGeneratedMsg(7, 0.07, 4, 2, rng.integers(0, 255, 4 * 2 * 3, dtype=np.uint8)),
        proto.FrameFlowMsg(7, 0.07, 4, 2, rng.normal(0, 1, 4 * 2 * 2).astype(np.float16)),
        proto.FrameDepthMsg(7, 0.07, 4, 2, rng.uniform(1, 5, 4 * 2).astype(np.float16)),
        proto.FrameNoiseMsg(2, 3, 4, rng.normal(0, 1, 24).astype(np.float16)),
        proto.ControlMsg(proto.CMD_RESET),
        proto.EventMsg(proto.EVENT_INFO, "hello ✓"),
        proto.PixelPickMsg(416, 240),
        proto.PickResultMsg((0.5, -0.25, 2.0)),
    ]


class TestRoundTrip:
    @pytest.mark.parametrize("msg", all_message_samples(),
                             ids=lambda m: type(m).__name__)
    def test_encode_decode_encode(self, msg):
        raw = proto.encode_message(msg)
        back, used = proto.decode_message(raw)
        assert used == len(raw)
        assert type(back) is type(msg)
        assert proto.encode_message(back) == raw  # byte-exact round trip

    def test_stream_of_messages_with_offsets(self):
        msgs = all_message_samples()
        blob = b"".join(proto.encode_message(m) for m in msgs)
        offset = 0
        decoded = []
        while offset < len(blob):
            m, used = proto.decode_message(blob, offset)
            decoded.append(m)
            offset += used
        assert [type(m) for m in decoded] == [type(m) for m in msgs]


class TestGoldenVectors:
    def test_point_force_golden_bytes(self):
        # hand-assembled: magic | version 1 | type 1 | len 32 | 8 f32
        msg = proto.ActionPointForceMsg((1.0, 2.0, 3.0), (0.0, 0.0, 1.0), 0.5, 0.25)
        expect = struct.pack("<IHHI", 0x52574E44, 1, 0x0001, 32)
        expect += struct.pack("<8f", 1, 2, 3, 0, 0, 1, 0.5, 0.25)
        assert proto.encode_message(msg) == expect
        assert expect.hex() == (
            "444e57520100010020000000"
            "0000803f000000400000404000000000000000000000803f0000003f0000803e")

    def test_control_golden_bytes(self):
        assert proto.encode_message(proto.ControlMsg(proto.CMD_PAUSE)).hex() == \
            "444e5752010020000100000001"

    def test_pixel_pick_golden_bytes(self):
        assert proto.encode_message(proto.PixelPickMsg(416, 240)).hex() == \
            "444e57520100300004000000a001f000"


class TestErrors:
    def test_truncated_header(self):
        with pytest.raises(errors.Incomplete):
            proto.decode_message(b"\x44\x4e\x57")

    def test_truncated_payload(self):
        raw = proto.encode_message(proto.ControlMsg(0))
        with pytest.raises(errors.Incomplete):
            proto.decode_message(raw[:-1])

    def test_bad_magic(self):
        raw = bytearray(proto.encode_message(proto.ControlMsg(0)))
        raw[0] ^= 0xFF
        with pytest.raises(errors.ProtocolError):
            proto.decode_message(bytes(raw))

    def test_bad_version(self):
        raw = struct.pack("<IHHI", proto.MAGIC, 9, proto.TYPE_CONTROL, 1) + b"\x00"
        with pytest.raises(errors.ProtocolError):
            proto.decode_message(raw)

    def test_unknown_type_skippable(self):
        raw = struct.pack("<IHHI", proto.MAGIC, 1, 0x7777, 3) + b"abc"
        tail = proto.encode_message(proto.ControlMsg(2))
        with pytest.raises(errors.UnknownMessage) as err:
            proto.decode_message(raw + tail)
        assert err.value.consumed == len(raw)
        msg, _ = proto.decode_message(raw + tail, err.value.consumed)
        assert isinstance(msg, proto.ControlMsg)

    def test_wrong_payload_length(self):
        raw = struct.pack("<IHHI", proto.MAGIC, 1, proto.TYPE_ACTION_GRIPPER, 3) + b"abc"
        with pytest.raises(errors.ProtocolError):
            proto.decode_message(raw)


class TestFuzz:
    def test_random_bytes_never_crash(self):
        # acceptance: 1e5 random byte strings only ever raise protocol errors
        rng = np.random.default_rng(1234)
        ok = (errors.ProtocolError, errors.Incomplete, errors.UnknownMessage)
        for _ in range(100_000):
            n = int(rng.integers(0, 64))
            buf = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
            try:
                proto.decode_message(buf)
            except ok:
                pass

    def test_mutated_valid_messages_never_crash(self):
        rng = np.random.default_rng(5)
        ok = (errors.ProtocolError, errors.Incomplete, errors.UnknownMessage)
        base = [proto.encode_message(m) for m in all_message_samples()]
        for _ in range(5000):
            raw = bytearray(base[int(rng.integers(0, len(base)))])
            for _ in range(int(rng.integers(1, 4))):
                raw[int(rng.integers(0, len(raw)))] = int(rng.integers(0, 256))
            try:
                proto.decode_message(bytes(raw))
            except ok:
                pass

    @settings(max_examples=300, deadline=None)
    @given(st.binary(max_size=200))
    def test_hypothesis_arbitrary_buffers(self, buf):
        try:
            proto.decode_message(buf)
        except (errors.ProtocolError, errors.Incomplete, errors.UnknownMessage):
            pass


class TestConversions:
    def test_action_from_message(self):
        msg = proto.ActionPointForceMsg((1.0, 2.0, 3.0), (0.0, 0.0, 1.0), 0.5, 0.25)
        act = proto.action_from_message(msg)
        np.testing.assert_array_equal(act.position, [1, 2, 3])
        assert act.radius == 0.5

    def test_gripper_quaternion_renormalized(self):
        q = (0.9999, 0.0, 0.0, 0.0141)  # norm slightly off after f32 transport
        act = proto.action_from_message(proto.ActionGripperMsg((0, 0, 0), q, 0.5))
        assert abs(np.linalg.norm(act.ee_orientation) - 1.0) < 1e-9

    def test_camera_reorthonormalized(self):
        from conftest import identity_camera

        rot = np.eye(3) + np.random.default_rng(0).normal(0, 1e-4, (3, 3))
        msg = proto.ActionCameraMsg(tuple(rot.ravel()), (0.0, 0.0, 0.0))
        act = proto.camera_action_from_message(msg, identity_camera())
        r = act.camera.rotation
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-9

    def test_conditioning_messages(self):
        h, w = 16, 24
        cond = ConditioningFrame(
            flow=np.random.default_rng(0).normal(0, 1, (h, w, 2)).astype(np.float32),
            preview=np.random.default_rng(1).integers(0, 255, (h, w, 3), dtype=np.uint8),
            depth_buffer=np.full((h, w), 2.0, np.float32),
            coverage=np.ones((h, w), bool),
            warped_noise=np.random.default_rng(2).normal(0, 1, (2, 3, 16)).astype(np.float32),
            frame_index=3, sim_time=0.03)
        msgs = proto.conditioning_messages(cond)
        kinds = [type(m).__name__ for m in msgs]
        assert kinds == ["FramePreviewMsg", "FrameFlowMsg", "FrameDepthMsg", "FrameNoiseMsg"]
        for m in msgs:
            raw = proto.encode_message(m)
            back, used = proto.decode_message(raw)
            assert used == len(raw)
        pv, _ = proto.decode_message(proto.encode_message(msgs[0]))
        assert np.array_equal(pv.rgb.reshape(h, w, 3), cond.preview)
