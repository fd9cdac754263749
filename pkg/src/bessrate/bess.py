"""Battery parameters and stored-energy dynamics."""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Any, Mapping

from ._config import read_yaml

# Above this per-step self-discharge the lossless LP dynamics drift noticeably from replay.
GAMMA_MODEL_LIMIT = 1e-4


class BessError(ValueError):
    pass


@dataclass(frozen=True)
class BessSpec:
    capacity: float
    e_min_frac: float
    e_max_frac: float
    p_charge_max: float
    p_discharge_max: float
    eta_charge: float
    eta_discharge: float
    e_init_frac: float
    gamma_per_step: float = 0.0

    @property
    def e_min(self) -> float:
        return self.capacity * self.e_min_frac

    @property
    def e_max(self) -> float:
        return self.capacity * self.e_max_frac

    @property
    def e_init(self) -> float:
        return self.capacity * self.e_init_frac

    @property
    def is_empty(self) -> bool:
        return self.capacity == 0 or (self.p_charge_max == 0 and self.p_discharge_max == 0)

    @classmethod
    def none(cls) -> BessSpec:
        """Zero-size battery: the building runs on grid and solar alone."""
        return cls(0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0)


def soc_step(e: float, p_b: float, dt: float, gamma: float = 0.0) -> float:
    """Stored energy after one step of signed battery power ``p_b`` (charge > 0)."""
    if dt <= 0:
        raise BessError(f"dt must be positive, got {dt}")
    return (1.0 - gamma) * e + p_b * dt


def validate(spec: BessSpec) -> list[str]:
    """Violated invariants of ``spec``, each naming its field; empty means ok."""
    out = []
    for name in ("capacity", "e_min_frac", "e_max_frac", "e_init_frac", "p_charge_max",
                 "p_discharge_max", "eta_charge", "eta_discharge", "gamma_per_step"):
        if not math.isfinite(getattr(spec, name)):
            out.append(f"{name}: must be finite")
    if out:
        return out
    if spec.capacity < 0:
        out.append("capacity: must be >= 0")
    if not 0 <= spec.e_min_frac < spec.e_max_frac <= 1:
        out.append(f"e_min_frac/e_max_frac: need 0 <= e_min_frac < e_max_frac <= 1, "
                   f"got {spec.e_min_frac}, {spec.e_max_frac}")
    if not spec.e_min_frac <= spec.e_init_frac <= spec.e_max_frac:
        out.append(f"e_init_frac: {spec.e_init_frac} outside [{spec.e_min_frac}, {spec.e_max_frac}]")
    if spec.p_charge_max < 0:
        out.append("p_charge_max: must be >= 0")
    if spec.p_discharge_max < 0:
        out.append("p_discharge_max: must be >= 0")
    for name in ("eta_charge", "eta_discharge"):
        v = getattr(spec, name)
        if not 0 < v <= 1:
            out.append(f"{name}: efficiency must be in (0, 1], got {v}")
    if not 0 <= spec.gamma_per_step < 1:
        out.append(f"gamma_per_step: must be in [0, 1), got {spec.gamma_per_step}")
    return out


def check(spec: BessSpec) -> BessSpec:
    problems = validate(spec)
    if problems:
        raise BessError("invalid battery: " + "; ".join(problems))
    if spec.gamma_per_step > GAMMA_MODEL_LIMIT:
        warnings.warn(
            f"gamma_per_step={spec.gamma_per_step} exceeds {GAMMA_MODEL_LIMIT}; the optimizer "
            "assumes lossless storage between steps",
            stacklevel=2,
        )
    return spec


CONFIG_KEYS = {
    "capacity_kwh": "capacity",
    "e_min_frac": "e_min_frac",
    "e_max_frac": "e_max_frac",
    "e_init_frac": "e_init_frac",
    "p_charge_max_kw": "p_charge_max",
    "p_discharge_max_kw": "p_discharge_max",
    "eta_charge": "eta_charge",
    "eta_discharge": "eta_discharge",
    "gamma_per_step": "gamma_per_step",
}
_OPTIONAL = {"gamma_per_step"}


def bess_from_config(cfg: Mapping[str, Any]) -> BessSpec:
    node = cfg.get("bess", cfg)
    if not isinstance(node, Mapping):
        raise BessError("bess config must be a mapping")
    unknown = set(node) - set(CONFIG_KEYS)
    if unknown:
        raise BessError(f"unknown bess keys: {sorted(unknown)}")
    missing = set(CONFIG_KEYS) - _OPTIONAL - set(node)
    if missing:
        # efficiencies included: there is no safe default for them
        raise BessError(f"missing bess keys: {sorted(missing)}")
    kwargs = {}
    for key, attr in CONFIG_KEYS.items():
        if key in node:
            try:
                kwargs[attr] = float(node[key])
            except (TypeError, ValueError):
                raise BessError(f"bess.{key}: expected a number, got {node[key]!r}") from None
    return BessSpec(**kwargs)


def load_bess(path: str | os.PathLike) -> BessSpec:
    if not os.path.exists(path):
        raise BessError(f"no such battery config: {path}")
    with open(path) as fh:
        cfg = read_yaml(fh) or {}
    return bess_from_config(cfg)
