"""Parameter archive round trips and corruption handling."""

import numpy as np
import pytest

from tadgraph.checkpoint import load_checkpoint, save_checkpoint
from tadgraph.errors import FormatError


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    params = {
        "proj": rng.normal(size=(8, 3)),
        "block0.t_conv": rng.normal(size=(3, 2, 4)),
        "loc.b3": np.zeros(2),
    }
    path = tmp_path / "model.tgck"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(params)
    for name in params:
        np.testing.assert_array_equal(loaded[name], params[name])
        assert loaded[name].dtype == np.float64


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.tgck"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "model.tgck"
    save_checkpoint(path, {"w": np.ones((4, 4))})
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(path)
