"""Checkpoint round trips and tamper detection."""

import numpy as np
import pytest

from flightpatchnet.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from flightpatchnet.errors import CheckpointError


def sample_state():
    rng = np.random.default_rng(0)
    return {
        "embed.weight": rng.standard_normal((6, 8)),
        "embed.bias": np.zeros(8),
        "head.weight": rng.standard_normal((8, 3)),
    }


def test_round_trip(tmp_path):
    path = tmp_path / "model.ckpt"
    header = {"format": "flightpatch-ckpt-v1", "seed": 7, "lookback": 60}
    state = sample_state()
    save_checkpoint(path, state, header)
    got_header, got_state = load_checkpoint(path)
    assert got_header == header
    assert list(got_state) == list(state)
    for name in state:
        np.testing.assert_array_equal(got_state[name], state[name])


def test_write_is_deterministic(tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, sample_state(), {"seed": 1})
    save_checkpoint(b, sample_state(), {"seed": 1})
    assert a.read_bytes() == b.read_bytes()


def test_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_rejects_tampered_header(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, sample_state(), {"seed": 7})
    raw = bytearray(path.read_bytes())
    idx = raw.index(b'"seed":7')
    raw[idx + 7] = ord("8")
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "header" in str(err.value)


def test_rejects_tampered_payload(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, sample_state(), {"seed": 7})
    raw = bytearray(path.read_bytes())
    raw[-40] ^= 0xFF  # flip a payload byte ahead of the trailing digest
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "checksum" in str(err.value)


def test_magic_matches_format_version():
    assert MAGIC == b"flightpatch-ckpt-v1\n"
