"""Run configuration: a flat key=value file with CLI-flag overrides.

Values are coerced by the declared field type; unknown keys are rejected so
typos fail loudly. Flags win over file values, which win over defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, asdict

from .errors import InvalidInputError
from .losses import LossWeights
from .model import ModelDims

PRETRAIN_EPOCHS_DEFAULT = 80
FINETUNE_EPOCHS_DEFAULT = 30


@dataclass
class RunConfig:
    dataset: str = ""
    out_dir: str = "run"
    seed: int = 0
    epochs: int = PRETRAIN_EPOCHS_DEFAULT
    lr: float = 5e-4
    lr_integrator: float = 1e-4     # finetune: newly trained module
    lr_pretrained: float = 1e-5     # finetune: everything else
    batch_size: int = 64
    chunk_len: int = 81
    hidden: int = 128
    feature_dim: int = 32
    integrator_hidden: int = 128
    init_hidden: int = 64
    metric_fps: float = 30.0
    loss_pose: float = 1.0
    loss_shape: float = 0.1
    loss_kp3d: float = 1.0
    loss_kp2d: float = 1.0
    loss_cascade: float = 0.5
    loss_root_rot: float = 1.0
    loss_root_vel: float = 1.0
    loss_contact: float = 1.0
    loss_ang_vel: float = 0.5
    loss_cam_rot: float = 0.5
    loss_foot_slide: float = 0.1

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1 or self.chunk_len < 2:
            raise InvalidInputError("epochs must be >= 0, batch >= 1, chunk >= 2")
        if min(self.lr, self.lr_integrator, self.lr_pretrained) <= 0:
            raise InvalidInputError("learning rates must be positive")

    def model_dims(self) -> ModelDims:
        return ModelDims(hidden=self.hidden, feature_dim=self.feature_dim,
                         integrator_hidden=self.integrator_hidden,
                         init_hidden=self.init_hidden)

    def loss_weights(self) -> LossWeights:
        return LossWeights(pose=self.loss_pose, shape=self.loss_shape,
                           kp3d=self.loss_kp3d, kp2d=self.loss_kp2d,
                           cascade=self.loss_cascade, root_rot=self.loss_root_rot,
                           root_vel=self.loss_root_vel, contact=self.loss_contact,
                           ang_vel=self.loss_ang_vel, cam_rot=self.loss_cam_rot,
                           foot_slide=self.loss_foot_slide)

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(name: str, kind, raw: str):
    try:
        if kind is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return kind(raw.strip())
    except ValueError as exc:
        raise InvalidInputError(f"config key {name}: cannot parse {raw!r}") from exc


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional key=value file plus overrides."""
    types = {f.name: f.type for f in fields(RunConfig)}
    kinds = {f.name: type(f.default) for f in fields(RunConfig)}
    values: dict = {}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise InvalidInputError(f"{path}:{lineno}: expected key=value")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in kinds:
                    raise InvalidInputError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _coerce(key, kinds[key], raw)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in kinds:
            raise InvalidInputError(f"unknown config key {key!r}")
        values[key] = raw if not isinstance(raw, str) else _coerce(key, kinds[key], raw)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg
