import numpy as np
import pytest

from ermv.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint


def test_roundtrip(tmp_path):
    path = tmp_path / "model.ckpt"
    tensors = {
        "a.weight": np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32),
        "b.bias": np.zeros(7, dtype=np.float32),
        "scalar": np.asarray(2.5, dtype=np.float32),
    }
    save_checkpoint(path, {"step": 3, "note": "x"}, tensors)
    echo, loaded = load_checkpoint(path)
    assert echo == {"step": 3, "note": "x"}
    assert set(loaded) == set(tensors)
    for k in tensors:
        assert loaded[k].dtype == np.float32
        assert np.array_equal(loaded[k], tensors[k])


def test_magic_and_layout(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, {}, {"w": np.ones((2, 2), dtype=np.float32)})
    raw = path.read_bytes()
    assert raw.startswith(MAGIC)
    # version 1, little-endian
    assert raw[8:12] == b"\x01\x00\x00\x00"


def test_corrupt_magic_names_file(tmp_path):
    path = tmp_path / "broken.ckpt"
    save_checkpoint(path, {}, {"w": np.ones(2, dtype=np.float32)})
    data = bytearray(path.read_bytes())
    data[0] = ord("X")
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "broken.ckpt" in str(err.value)


def test_truncated_payload(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, {}, {"w": np.ones((4, 4), dtype=np.float32)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.ckpt")
