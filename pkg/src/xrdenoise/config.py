"""Flat ``key = value`` run configuration.

One entry per line, ``#`` starts a comment. Unknown keys are rejected and
every run writes the fully resolved configuration next to its outputs.
Training keys left at ``auto`` take the per-architecture defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .nn.network import NetworkSpec
from .nn.training import TrainConfig
from .noise import BlurSpec, parse_label
from .synth import SceneSpec, default_scene

AUTO = "auto"


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fraction(text: str) -> float:
    """Accepts plain floats and simple ratios such as ``2/21``."""
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


# key -> (default, parser, note). Notes say where the default comes from.
SCHEMA: dict[str, tuple[object, object, str]] = {
    "seed": (0, int, "master seed; sub-seeds derived per stage"),
    # scene / dataset
    "n_pairs": (200, int, "desk-scale dataset size"),
    "height": (64, int, "desk-scale frame size"),
    "width": (64, int, "desk-scale frame size"),
    "exposure_scale": (2.0 / 21.0, _fraction, "2 s / 21 s LC/HC exposure ratio"),
    "split_train": (0.7, float, "70/20/10 split"),
    "split_val": (0.2, float, "70/20/10 split"),
    "split_test": (0.1, float, "70/20/10 split"),
    "background": (20.0, float, "scene design"),
    "dead_fraction": (0.001, float, "scene design"),
    "jitter_amplitude": (0.10, float, "uniform +-10% feature amplitudes"),
    "jitter_shift": (2.0, float, "uniform +-2 px feature centres"),
    "lattice_a": (5.32 / math.sqrt(2.0), float, "in-plane lattice constant [A]"),
    "lattice_c": (13.2, float, "out-of-plane lattice constant [A]"),
    # noise
    "noise": ("pois", str, "artificial noise family label"),
    "blur_std_min": (0.3, float, "random blur kernel std range"),
    "blur_std_max": (0.5, float, "random blur kernel std range"),
    "blur_radius": (2, int, "5x5 blur kernel"),
    # network
    "arch": ("vdsr", str, "vdsr or irunet"),
    "depth": (20, int, "20 conv layers"),
    "filters": (64, int, "64 filters per layer"),
    "kernel": (3, int, "3x3 kernels"),
    "stages": (2, int, "irunet pooling stages"),
    # training
    "lr0": (AUTO, float, "initial learning rate per architecture"),
    "batch_size": (AUTO, int, "per architecture"),
    "epochs": (AUTO, int, "per architecture"),
    "schedule_start": (AUTO, int, "per architecture"),
    "schedule_every": (AUTO, int, "per architecture"),
    "schedule_factor": (AUTO, float, "per architecture"),
    "flip_prob": (0.5, float, "l-flip augmentation probability"),
    "alpha": (0.7, float, "MSSIM weight in the combined loss"),
    "single_thread": (True, _bool, "single-threaded BLAS for bit-reproducible runs"),
    "amsgrad_correct_v": (True, _bool, "bias-correct the AMSGrad second-moment maximum"),
    # analysis
    "flank_fraction": (0.25, float, "background flanks per scan side"),
    "window_h": (0.01, float, "projection half-window along h [r.l.u.]"),
    "window_k": (0.008, float, "projection half-window along k [r.l.u.]"),
    "window_l": (0.3, float, "projection half-window along l [r.l.u.]"),
    "q0_h": (0.23, float, "projection centre"),
    "q0_k": (0.0, float, "projection centre"),
    "q0_l": (8.5, float, "projection centre"),
    "ensemble_seeds": ("0,1,2,3,4", str, "seeds of the repeated-training ensemble"),
}

TRAIN_KEYS = ("lr0", "batch_size", "epochs", "schedule_start", "schedule_every", "schedule_factor")


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value):
    default, parser, _ = SCHEMA[key]
    if isinstance(value, str) and value.strip() == AUTO and default == AUTO:
        return AUTO
    if not isinstance(value, str):
        return value
    try:
        return parser(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_mapping(cls, overrides: dict | None = None) -> "RunConfig":
        values = {k: v[0] for k, v in SCHEMA.items()}
        for key, value in (overrides or {}).items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = _convert(key, value)
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        raw = {}
        if path is not None:
            try:
                with open(path) as fh:
                    raw = parse_text(fh.read(), str(path))
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(raw)

    def updated(self, **overrides) -> "RunConfig":
        return RunConfig.from_mapping({**self.values, **overrides})

    def validate(self) -> None:
        v = self.values
        try:
            parse_label(v["noise"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if v["arch"] not in ("vdsr", "irunet"):
            raise ConfigError(f"arch must be vdsr or irunet, got {v['arch']!r}")
        fr = (v["split_train"], v["split_val"], v["split_test"])
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be >= 0 and sum to 1, got {fr}")
        if v["n_pairs"] < 1 or v["height"] < 4 or v["width"] < 4:
            raise ConfigError("n_pairs must be >= 1 and frames at least 4x4")
        if not 0 < v["exposure_scale"] <= 1:
            raise ConfigError("exposure_scale must lie in (0, 1]")
        try:
            self.scene_spec()
            self.network_spec()
            self.train_config()
            self.blur_spec()
            self.ensemble_seeds()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # typed views -------------------------------------------------------

    def scene_spec(self) -> SceneSpec:
        """Default scene resized to ``height x width`` with the rod kept at the centre."""
        v = self.values
        base = default_scene()
        h, w = v["height"], v["width"]
        rows = replace(base.rows, origin=base.rows.origin + (base.height // 2 - h // 2) * base.rows.step)
        cols = replace(base.cols, origin=base.cols.origin + (base.width // 2 - w // 2) * base.cols.step)
        spurions = tuple(
            replace(s, pixel=(round(s.pixel[0] * h / base.height), round(s.pixel[1] * w / base.width)))
            for s in base.spurions
        )
        return replace(
            base, height=h, width=w, rows=rows, cols=cols, spurions=spurions,
            background=v["background"], dead_fraction=v["dead_fraction"],
            jitter_amplitude=v["jitter_amplitude"], jitter_shift=v["jitter_shift"],
        )

    def network_spec(self) -> NetworkSpec:
        v = self.values
        return NetworkSpec(v["arch"], v["depth"], v["filters"], v["kernel"], v["stages"])

    def train_config(self) -> TrainConfig:
        v = self.values
        overrides = {k: v[k] for k in TRAIN_KEYS if v[k] != AUTO}
        return TrainConfig.for_topology(
            v["arch"], flip_prob=v["flip_prob"], seed=v["seed"], alpha=v["alpha"],
            single_thread=v["single_thread"], correct_v=v["amsgrad_correct_v"], **overrides,
        )

    def blur_spec(self) -> BlurSpec:
        v = self.values
        return BlurSpec(v["blur_radius"], (v["blur_std_min"], v["blur_std_max"]))

    def fractions(self) -> tuple[float, float, float]:
        v = self.values
        return v["split_train"], v["split_val"], v["split_test"]

    def windows(self) -> dict:
        v = self.values
        return {"h": v["window_h"], "k": v["window_k"], "l": v["window_l"]}

    def q0(self) -> dict:
        v = self.values
        return {"h": v["q0_h"], "k": v["q0_k"], "l": v["q0_l"]}

    def ensemble_seeds(self) -> list[int]:
        return [int(s) for s in str(self.values["ensemble_seeds"]).split(",") if s.strip()]

    def resolved(self) -> dict:
        """All keys with ``auto`` entries replaced by the values actually used."""
        out = dict(self.values)
        tc = self.train_config()
        for key in TRAIN_KEYS:
            out[key] = getattr(tc, key)
        return out

    def dumps(self) -> str:
        lines = []
        for key, value in self.resolved().items():
            if isinstance(value, float):
                value = repr(value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key} = {value}  # {SCHEMA[key][2]}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())
