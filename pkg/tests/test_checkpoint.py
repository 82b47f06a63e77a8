import struct

import numpy as np
import pytest

from hqnn.autodiff import Tensor
from hqnn.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from hqnn.errors import FormatError
from hqnn.models import FAMILIES, ModelSpec, build_model, forward

VARIANTS = [(f, q) for f in FAMILIES for q in (False, True)]


@pytest.mark.parametrize("family, quantum", VARIANTS)
def test_round_trip_bit_identical(tmp_path, family, quantum):
    model = build_model(ModelSpec(family, quantum_head=quantum), 123)
    save_checkpoint(model, tmp_path / "m.ckpt")
    loaded = load_checkpoint(tmp_path / "m.ckpt")
    assert loaded.spec == model.spec and loaded.param_count == model.param_count
    for name, t in model.params.items():
        assert loaded.params[name].data.tobytes() == t.data.tobytes()
    img = Tensor(np.random.default_rng(0).random((3, 64, 64)))
    assert forward(loaded, img).data.tobytes() == forward(model, img).data.tobytes()


@pytest.mark.parametrize(
    "spec",
    [
        ModelSpec("nn4eo_v1", padding="valid"),
        ModelSpec("nn4eo_v2", conv_channels=(3, 9), padding="valid"),
        ModelSpec("vit", vit_patch=16, vit_embed_dim=32, vit_heads=4, quantum_head=True),
    ],
)
def test_non_default_specs_are_inferred(tmp_path, spec):
    save_checkpoint(build_model(spec, 0), tmp_path / "m.ckpt")
    assert load_checkpoint(tmp_path / "m.ckpt").spec == spec


def test_header_layout():
    buf = encode_checkpoint(build_model(ModelSpec("nn4eo_v1", quantum_head=True), 0))
    assert buf[:4] == b"HQNN"
    assert struct.unpack("<IBI", buf[4:13]) == (1, 1, 4)
    (n,) = struct.unpack("<H", buf[13:15])
    assert buf[15 : 15 + n] == b"conv0.weight"
    assert buf[15 + n] == 4 and struct.unpack("<4I", buf[16 + n : 32 + n]) == (6, 3, 5, 5)


def test_heads_differ_only_in_flag_byte():
    c = encode_checkpoint(build_model(ModelSpec("nn4eo_v2"), 9))
    q = encode_checkpoint(build_model(ModelSpec("nn4eo_v2", quantum_head=True), 9))
    diff = [i for i, (a, b) in enumerate(zip(c, q)) if a != b]
    assert len(c) == len(q) and diff == [8] and (c[8], q[8]) == (0, 1)


def test_bad_magic(tmp_path):
    buf = bytearray(encode_checkpoint(build_model(ModelSpec(), 0)))
    buf[:4] = b"NOPE"
    (tmp_path / "x.ckpt").write_bytes(bytes(buf))
    with pytest.raises(FormatError, match="bad magic .* offset 0"):
        load_checkpoint(tmp_path / "x.ckpt")


def test_version_mismatch():
    buf = bytearray(encode_checkpoint(build_model(ModelSpec(), 0)))
    buf[4:8] = struct.pack("<I", 2)
    with pytest.raises(FormatError, match="version 2 at offset 4"):
        decode_checkpoint(bytes(buf))


def test_bad_head_byte():
    buf = bytearray(encode_checkpoint(build_model(ModelSpec(), 0)))
    buf[8] = 7
    with pytest.raises(FormatError, match="head type 7 at offset 8"):
        decode_checkpoint(bytes(buf))


@pytest.mark.parametrize("cut", [2, 10, 14, 20, 200])
def test_truncation_names_offset(cut):
    buf = encode_checkpoint(build_model(ModelSpec(), 0))
    with pytest.raises(FormatError, match=r"truncated at offset \d+"):
        decode_checkpoint(buf[:cut])


def test_truncated_payload_offset_is_exact():
    buf = encode_checkpoint(build_model(ModelSpec(), 0))
    payload_start = 13 + 2 + len("conv0.weight") + 1 + 16
    with pytest.raises(FormatError, match=f"offset {payload_start} reading payload of conv0.weight"):
        decode_checkpoint(buf[: payload_start + 100])


def test_trailing_bytes():
    buf = encode_checkpoint(build_model(ModelSpec(), 0))
    with pytest.raises(FormatError, match=f"3 trailing bytes at offset {len(buf)}"):
        decode_checkpoint(buf + b"abc")


def test_shape_mismatch_against_explicit_spec(tmp_path):
    save_checkpoint(build_model(ModelSpec("nn4eo_v1", conv_channels=(4,)), 0), tmp_path / "m.ckpt")
    with pytest.raises(FormatError, match="conv0.weight has shape"):
        load_checkpoint(tmp_path / "m.ckpt", spec=ModelSpec("nn4eo_v1"))


def test_missing_file(tmp_path):
    with pytest.raises(FormatError, match="cannot read"):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_save_leaves_no_temp_file(tmp_path):
    save_checkpoint(build_model(ModelSpec(), 0), tmp_path / "m.ckpt")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["m.ckpt"]
