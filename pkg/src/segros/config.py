"""Pipeline knob bundle and config-file handling.

One RunConfig carries every knob the supervision pipeline reads. Internally
the fields use descriptive names; the command line and config files use the
short external spellings (tau, rho, eta, alpha, gamma-lo, gamma-hi, lambda,
drop-loss), and the mapping between the two lives here.

Resolution order: built-in defaults, then a config file, then explicit
command-line flags.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ParameterError

__all__ = ["RunConfig", "FLAG_TO_FIELD", "load_config_file", "resolve_config"]

MODES = ("continuous", "discrete")

# external flag name -> dataclass field
FLAG_TO_FIELD = {
    "tau": "temperature",
    "rho": "keep_ratio",
    "eta": "hint_ratio",
    "alpha": "noise_scale",
    "gamma-lo": "mask_lo",
    "gamma-hi": "mask_hi",
    "lambda": "i2t_weight",
    "drop-loss": "drop_loss_ratio",
    "seed": "seed",
    "mode": "mode",
}
_FIELD_TO_FLAG = {v: k for k, v in FLAG_TO_FIELD.items()}


@dataclass
class RunConfig:
    """Every knob one pipeline run depends on, with the published defaults."""

    temperature: float = 1.0
    keep_ratio: float = 0.4
    hint_ratio: float = 0.3
    noise_scale: float = 0.5
    mask_lo: float = 0.7
    mask_hi: float = 1.0
    i2t_weight: float = 1.0
    drop_loss_ratio: float | None = None
    seed: int = 0
    mode: str = "continuous"

    def validate(self) -> "RunConfig":
        if not self.temperature > 0:
            raise ParameterError(f"tau must be positive, got {self.temperature}")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ParameterError(f"rho must be in (0, 1], got {self.keep_ratio}")
        if not 0.0 < self.hint_ratio <= 1.0:
            raise ParameterError(f"eta must be in (0, 1], got {self.hint_ratio}")
        if self.noise_scale < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.noise_scale}")
        if not 0.0 < self.mask_lo < self.mask_hi <= 1.0:
            raise ParameterError(
                f"gamma bounds must satisfy 0 < lo < hi <= 1, got [{self.mask_lo}, {self.mask_hi})"
            )
        if self.i2t_weight < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.i2t_weight}")
        if self.drop_loss_ratio is not None and not 0.0 < self.drop_loss_ratio <= 1.0:
            raise ParameterError(
                f"drop-loss must be in (0, 1], got {self.drop_loss_ratio}"
            )
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        return self

    def header_line(self) -> str:
        """Flag-named echo of every knob, for artifact headers."""
        drop = "none" if self.drop_loss_ratio is None else repr(self.drop_loss_ratio)
        return (
            f"tau={self.temperature!r} rho={self.keep_ratio!r} eta={self.hint_ratio!r} "
            f"alpha={self.noise_scale!r} gamma_lo={self.mask_lo!r} gamma_hi={self.mask_hi!r} "
            f"lambda={self.i2t_weight!r} drop_loss={drop} seed={self.seed} mode={self.mode}"
        )


def _parse_value(field_name: str, raw: str):
    if field_name == "seed":
        try:
            return int(raw)
        except ValueError as exc:
            raise ParameterError(f"seed must be an integer, got {raw!r}") from exc
    if field_name == "mode":
        return raw
    if field_name == "drop_loss_ratio" and raw.lower() in ("none", "off"):
        return None
    try:
        return float(raw)
    except ValueError as exc:
        raise ParameterError(
            f"{_FIELD_TO_FLAG[field_name]} must be a number, got {raw!r}"
        ) from exc


def load_config_file(path: str | Path) -> dict[str, object]:
    """Read key=value lines into a field->value dict.

    Keys use the external flag spellings; dashes and underscores are
    interchangeable. Blank lines and # comments are ignored. Unknown keys
    and unparsable values are configuration errors.
    """
    values: dict[str, object] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParameterError(
                f"{path}:{lineno}: expected key=value, got {line!r}"
            )
        key, _, raw = stripped.partition("=")
        key = key.strip().replace("_", "-")
        if key not in FLAG_TO_FIELD:
            raise ParameterError(f"{path}:{lineno}: unknown config key {key!r}")
        field_name = FLAG_TO_FIELD[key]
        values[field_name] = _parse_value(field_name, raw.strip())
    return values


def resolve_config(
    file_values: dict[str, object] | None = None,
    flag_values: dict[str, object] | None = None,
) -> RunConfig:
    """Defaults, overridden by the config file, overridden by explicit flags.

    A key absent from a layer leaves the lower layers untouched; only keys
    the user actually set should appear.
    """
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for layer in (file_values or {}), (flag_values or {}):
        for key in layer:
            if key not in known:
                raise ParameterError(f"unknown config field {key!r}")
        cfg = replace(cfg, **layer)
    return cfg.validate()
