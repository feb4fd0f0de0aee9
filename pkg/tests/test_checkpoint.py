import numpy as np
import pytest

from res2spoof.checkpoint import (
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    snapshot,
)
from res2spoof.errors import DataError
from res2spoof.models import build_model, forward, get_config, tiny_clone
from res2spoof.training import Adam, TrainConfig


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_round_trip_reproduces_forward_bitwise(tmp_path, rng, dtype):
    model = build_model(tiny_clone(get_config("se_res2net50")), seed=2, dtype=dtype)
    for m in model.modules():
        if hasattr(m, "running_mean"):
            m.running_mean[...] = rng.standard_normal(m.running_mean.shape)
    model.fc.weight.data = rng.standard_normal(model.fc.weight.shape).astype(dtype)
    opt = Adam(model.parameters(), TrainConfig())
    save_checkpoint(snapshot(model, opt, step=17, extra={"feature": "lfcc"}), tmp_path / "m.ckpt")
    ckpt = load_checkpoint(tmp_path / "m.ckpt")
    assert ckpt.step == 17 and ckpt.extra == {"feature": "lfcc"}
    assert ckpt.model_config == model.config
    assert set(ckpt.optimizer) == {f"adam_{k}/{p.name}" for p in opt.params for k in "mv"}
    x = rng.standard_normal((2, 1, 32, 40)).astype(dtype)
    restored = model_from_checkpoint(ckpt)
    assert forward(restored, x).tobytes() == forward(model.eval(), x).tobytes()


def test_same_state_same_bytes(tmp_path):
    for name in ("a", "b"):
        save_checkpoint(snapshot(build_model(tiny_clone(get_config("resnet50")), seed=5)), tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_hash_mismatch_and_bad_magic(tmp_path):
    model = build_model(tiny_clone(get_config("resnet34")))
    save_checkpoint(snapshot(model, config_hash="0123456789abcdef"), tmp_path / "m.ckpt")
    assert load_checkpoint(tmp_path / "m.ckpt", "0123456789abcdef").config_hash == "0123456789abcdef"
    with pytest.raises(DataError, match="does not match"):
        load_checkpoint(tmp_path / "m.ckpt", "ffffffffffffffff")
    (tmp_path / "bad").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(DataError, match="not a checkpoint"):
        load_checkpoint(tmp_path / "bad")


def test_restore_into_wrong_architecture(tmp_path):
    from res2spoof.checkpoint import restore

    ckpt = snapshot(build_model(tiny_clone(get_config("resnet34"))))
    with pytest.raises(DataError):
        restore(build_model(tiny_clone(get_config("resnet50"))), ckpt)
