import numpy as np
import pytest

from whamkit.errors import CheckpointError, InvalidInputError
from whamkit.optim import AdamState, adam_step, load_checkpoint, save_checkpoint


class TestAdam:
    def test_first_step_is_signlike(self):
        state = AdamState(lr=0.01)
        params = np.zeros(4)
        grads = np.array([0.5, -2.0, 1e-3, -1e-4])
        new = adam_step(state, params, grads)
        # bias correction makes m_hat = g and v_hat = g^2 on step one
        assert np.abs(new + 0.01 * np.sign(grads)).max() < 1e-5

    def test_zero_gradient_keeps_params(self):
        state = AdamState(lr=0.1)
        params = np.array([1.0, -2.0])
        new = adam_step(state, params, np.zeros(2))
        assert (new == params).all()

    def test_second_step_never_larger(self):
        state = AdamState(lr=0.05)
        params = np.array([0.0])
        g = np.array([0.7])
        p1 = adam_step(state, params, g)
        step1 = abs(p1[0] - params[0])
        p2 = adam_step(state, p1, g)
        step2 = abs(p2[0] - p1[0])
        assert step2 <= step1 + 1e-12

    def test_scalar_recurrence_by_hand(self):
        lr, b1, b2, eps = 0.02, 0.9, 0.999, 1e-8
        state = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps)
        p = 0.3
        g = -0.45
        m = v = 0.0
        got = np.array([p])
        for t in range(1, 4):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
            got = adam_step(state, got, np.array([g]))
            assert abs(got[0] - p) < 1e-15

    def test_lr_scale(self):
        state = AdamState(lr=0.01, lr_scale=np.array([1.0, 0.1]))
        new = adam_step(state, np.zeros(2), np.array([1.0, 1.0]))
        assert abs(new[0] / new[1] - 10.0) < 1e-6

    def test_length_mismatch(self):
        state = AdamState(lr=0.01)
        with pytest.raises(InvalidInputError):
            adam_step(state, np.zeros(3), np.zeros(2))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "model.ckpt"
        vec = np.random.default_rng(0).normal(size=257)
        save_checkpoint(path, {"hidden": 8}, vec, meta={"epoch": 3},
                        extra_sections={"adam_m": vec * 0.5})
        dims, meta, sections = load_checkpoint(path)
        assert dims == {"hidden": 8}
        assert meta == {"epoch": 3}
        assert (sections["params"] == vec).all()
        assert (sections["adam_m"] == vec * 0.5).all()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPTxxxx")
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_version_check(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, {}, np.zeros(3))
        raw = bytearray(path.read_bytes())
        raw[8] = 99  # bump the version field
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, {}, np.zeros(100))
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_deterministic_bytes(self, tmp_path):
        vec = np.random.default_rng(1).normal(size=64)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, {"hidden": 4}, vec, meta={"epoch": 1})
        save_checkpoint(b, {"hidden": 4}, vec, meta={"epoch": 1})
        assert a.read_bytes() == b.read_bytes()
