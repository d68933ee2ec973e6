from pydantic import BaseModel, ConfigDict, Field
from typing import Optional, Dict, Any, List
from pathlib import Path
import logging
import time

from .config_loader import get_reference_defaults, defaults_version
from .scenario import ScenarioConfig
from .flows.theory_flow import TheoryFlowHelper
from .flows.simulate_flow import SimulateFlowHelper
from .flows.stirap_flow import StirapFlowHelper
from .flows.wigner_flow import WignerFlowHelper
from .flows.figure_flow import FigureFlowHelper, FIGURES

logger = logging.getLogger(__name__)


class ScenarioState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: Optional[ScenarioConfig] = None
    figure: Optional[str] = None
    out_dir: str = "out"
    cavity_dim: Optional[int] = None
    fast: bool = False
    outputs: List[str] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)
    stdout_summary: Optional[Dict[str, Any]] = None

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    def add_output(self, path: Path) -> None:
        path = Path(path)
        self.outputs.append(str(path.relative_to(self.out_path)) if path.is_relative_to(self.out_path) else str(path))

    def simulation_dim(self) -> Optional[int]:
        """--nc wins over --fast; None keeps the configured truncation."""
        if self.cavity_dim is not None:
            return self.cavity_dim
        if self.fast:
            return int(get_reference_defaults().get("device", {}).get("fast_cavity_dim", 16))
        return None


class ScenarioFlow:
    """Routes one CLI invocation to the helper that owns its mode or figure."""

    def __init__(self, state: ScenarioState):
        self.state = state
        self._logger = logging.getLogger(__name__)
        logger.info(
            "ScenarioFlow.__init__: mode=%s figure=%s out=%s nc=%s fast=%s defaults=%s",
            state.config.mode if state.config else None, state.figure, state.out_dir,
            state.cavity_dim, state.fast, defaults_version(),
        )

    def kickoff(self) -> ScenarioState:
        payload = self.ingest()
        started = time.perf_counter()
        result = self.decide(payload)
        logger.info(
            "ScenarioFlow.kickoff: route finished with %s - outputs=%d elapsed=%.1fs",
            result, len(self.state.outputs), time.perf_counter() - started,
        )
        return self.state

    def ingest(self) -> Dict[str, Any]:
        self.state.out_path.mkdir(parents=True, exist_ok=True)
        return {"mode": self.state.config.mode if self.state.config else None, "figure": self.state.figure}

    def decide(self, payload: Dict[str, Any]) -> str:
        figure = payload.get("figure")
        if figure is not None:
            if figure not in FIGURES:
                raise ValueError(f"unknown figure {figure!r}, expected one of {sorted(FIGURES)}")
            logger.info("ScenarioFlow.decide: reproducing %s", figure)
            return FigureFlowHelper.handle(self.state, self._logger)

        mode = payload.get("mode")
        if mode in ("theory-gain", "theory-curve"):
            return TheoryFlowHelper.handle(self.state, self._logger)
        if mode == "simulate":
            return SimulateFlowHelper.handle(self.state, self._logger)
        if mode == "stirap-scan":
            return StirapFlowHelper.handle(self.state, self._logger)
        if mode == "wigner":
            return WignerFlowHelper.handle(self.state, self._logger)
        raise ValueError(f"no route for mode {mode!r}")
