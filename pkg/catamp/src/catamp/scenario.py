"""
Scenario configuration files for the command-line front end.

Numeric fields take internal units (ns, rad/ns) and accept engineering strings:
an optional `2pi*` prefix, a decimal number and an optional SI prefix, e.g.
"6.2k" (6200 ns) or "2pi*0.25u" (kappa for 0.25 kHz).
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
from pathlib import Path
from typing import Annotated, Any, List, Literal, Optional, Tuple

import orjson
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from .errors import ScenarioConfigError
from .jc_model import DeviceParams, SweepSchedule
from .lindblad import IntegratorConfig
from .protocol import ProtocolConfig
from .states import Parity
from .wigner import WignerGridSpec

logger = logging.getLogger(__name__)

_SI_PREFIX = {"": 1.0, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3, "k": 1e3, "M": 1e6, "G": 1e9}
_ENG_PATTERN = re.compile(r"^\s*(2pi\s*\*)?\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([pnuµmkMG]?)\s*$")


def parse_engineering(value: Any) -> Any:
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _ENG_PATTERN.match(value)
        if not m:
            raise ValueError(f"not a number or engineering string: {value!r}")
        number = float(m.group(2)) * _SI_PREFIX[m.group(3)]
        return 2.0 * math.pi * number if m.group(1) else number
    return value


EngFloat = Annotated[float, BeforeValidator(parse_engineering)]

Mode = Literal["theory-gain", "theory-curve", "simulate", "stirap-scan", "wigner"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class DeviceSection(_Section):
    coupling: Optional[EngFloat] = Field(default=None, alias="lambda")
    omega_r: Optional[EngFloat] = None
    kappa: Optional[EngFloat] = None
    gamma_minus: Optional[EngFloat] = None
    gamma_phi: Optional[EngFloat] = None
    tie_qubit_rates: bool = Field(default=False, description="gamma_minus = gamma_phi = 10 kappa")
    cavity_dim: Optional[int] = Field(default=None, ge=2)

    def to_params(self, cavity_dim_override: Optional[int] = None) -> DeviceParams:
        data = {k: v for k, v in self.model_dump(exclude={"tie_qubit_rates"}).items() if v is not None}
        if cavity_dim_override is not None:
            data["cavity_dim"] = cavity_dim_override
        params = DeviceParams.model_validate(data)
        if self.tie_qubit_rates:
            params = params.with_cavity_decay(params.kappa)
        return params


class SweepSection(_Section):
    delta_start: Optional[EngFloat] = None
    delta_end: Optional[EngFloat] = None
    duration: Optional[EngFloat] = Field(default=None, gt=0.0)
    profile: Optional[Literal["linear", "smoothstep"]] = None

    def to_schedule(self) -> SweepSchedule:
        return SweepSchedule.model_validate({k: v for k, v in self.model_dump().items() if v is not None})


class PulseSection(_Section):
    frequency_mode: Literal["verbatim", "derived", "calibrated"] = "calibrated"
    reverse_order: bool = False
    window: Literal["table", "full"] = "full"
    sequential_transfers: bool = False


class SnapSection(_Section):
    mode: Literal["fitted", "table2", "none"] = "fitted"
    placement: Literal["after_each", "after_last"] = "after_each"
    phases: Optional[List[float]] = None


class IntegratorSection(_Section):
    method: Literal["adaptive_dop853", "adaptive_rk45", "fixed_rk4"] = "adaptive_dop853"
    dt: EngFloat = Field(default=0.05, gt=0.0)
    rel_tol: EngFloat = Field(default=1e-10, gt=0.0)
    abs_tol: EngFloat = Field(default=1e-12, gt=0.0)
    sample_stride: int = Field(default=2000, ge=1)

    def to_config(self) -> IntegratorConfig:
        return IntegratorConfig.model_validate(self.model_dump())


class GridSection(_Section):
    start: EngFloat
    stop: EngFloat
    step: EngFloat = Field(gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "GridSection":
        if self.stop < self.start:
            raise ValueError("grid stop must not be below start")
        return self

    def values(self) -> List[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [self.start + i * self.step for i in range(n)]


class StirapSection(_Section):
    tau_values: Optional[List[EngFloat]] = None
    delta0: Optional[EngFloat] = None
    cavity_dim: Optional[int] = Field(default=None, ge=3)


class WignerSection(_Section):
    x_min: EngFloat = -4.0
    x_max: EngFloat = 4.0
    points: int = Field(default=81, ge=2)
    ideal_shift: int = Field(default=0, ge=0, description="apply E^dagger^k to the cat before evaluating")

    def grid_spec(self) -> WignerGridSpec:
        return WignerGridSpec(x_min=self.x_min, x_max=self.x_max, points=self.points)


class ScenarioConfig(_Section):
    """One run of the `cat-amp run` command."""

    mode: Mode
    alpha: EngFloat = 1.5
    parity: Parity = "even"
    k: int = Field(default=2, ge=1)
    alpha_prime_grid: Optional[GridSection] = None
    device: DeviceSection = Field(default_factory=DeviceSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    pulses: PulseSection = Field(default_factory=PulseSection)
    snap: SnapSection = Field(default_factory=SnapSection)
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    reset_mode: Literal["ideal", "skip"] = "ideal"
    decoherence_on: bool = True
    kappa_levels: Optional[List[EngFloat]] = None
    convergence_check: bool = False
    snapshot: bool = False
    stirap: StirapSection = Field(default_factory=StirapSection)
    wigner: WignerSection = Field(default_factory=WignerSection)
    output_path: str = "out"

    @model_validator(mode="after")
    def _mode_requirements(self) -> "ScenarioConfig":
        if self.mode == "simulate" and self.k not in (1, 2):
            raise ValueError("simulate supports k = 1 or 2")
        if self.mode == "simulate" and not self.alpha > 0.0:
            raise ValueError(f"simulate needs alpha > 0, got {self.alpha}")
        if self.mode == "theory-curve" and self.alpha_prime_grid is None:
            raise ValueError("theory-curve needs alpha_prime_grid")
        return self

    def protocol_config(self, cavity_dim_override: Optional[int] = None) -> ProtocolConfig:
        extra = {"snap_phases": self.snap.phases} if self.snap.phases is not None else {}
        return ProtocolConfig(
            device=self.device.to_params(cavity_dim_override),
            sweep=self.sweep.to_schedule(),
            frequency_mode=self.pulses.frequency_mode,
            reverse_order=self.pulses.reverse_order,
            window=self.pulses.window,
            sequential_transfers=self.pulses.sequential_transfers,
            snap_mode=self.snap.mode,
            snap_placement=self.snap.placement,
            reset_mode=self.reset_mode,
            decoherence_on=self.decoherence_on,
            integrator=self.integrator.to_config(),
            **extra,
        )


def scenario_schema() -> dict:
    return ScenarioConfig.model_json_schema(by_alias=True)


def load_scenario(path: Path) -> Tuple[ScenarioConfig, str]:
    """Parse and validate a scenario file; returns the config and the sha256 of its bytes."""
    raw = Path(path).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        data = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise ScenarioConfigError(f"{path}: invalid JSON - {e}") from e
    try:
        config = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ScenarioConfigError(f"{path}: schema violation - {e}") from e
    logger.info("Scenario.load: %s mode=%s sha256=%s", path, config.mode, digest[:12])
    return config, digest
