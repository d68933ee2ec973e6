from typing import Any, Dict, List, Tuple
import logging

from ..config_loader import get_reference_defaults
from ..exporters import write_csv
from ..jc_model import DeviceParams
from ..protocol import ProtocolConfig, stirap_scan
from ..units import US


def symmetry_report(points: List[Tuple[float, float]]) -> Dict[str, float]:
    """Largest |eff(tau) - eff(-tau)| over pairs present in the scan, and the efficiency range."""
    lookup = {round(t, 6): e for t, e in points}
    asym = [abs(e - lookup[round(-t, 6)]) for t, e in points if t > 0 and round(-t, 6) in lookup]
    effs = [e for _, e in points]
    return {
        "max_asymmetry": max(asym) if asym else 0.0,
        "max_efficiency": max(effs) if effs else 0.0,
        "min_efficiency": min(effs) if effs else 0.0,
    }


class StirapFlowHelper:
    """Single-manifold transfer efficiency against the envelope offset; writes `stirap_scan.csv`.

    Returns "__done__" always.
    """

    @staticmethod
    def handle(state: Any, logger: logging.Logger) -> str:
        cfg = state.config
        defaults = get_reference_defaults().get("stirap_scan", {})
        cavity_dim = cfg.stirap.cavity_dim or int(defaults.get("cavity_dim", 6))
        protocol = ProtocolConfig(
            device=DeviceParams(cavity_dim=cavity_dim),
            integrator=cfg.integrator.to_config().model_copy(update={"progress": False}),
        )
        points = stirap_scan(cfg.stirap.tau_values, cfg.stirap.delta0, protocol)
        path = write_csv(state.out_path / "stirap_scan.csv", ["tau_us", "efficiency"], [(t / US, e) for t, e in points])
        state.add_output(path)
        state.summary = {"points": len(points), **symmetry_report(points)}
        logger.info("StirapFlow.done: %s", state.summary)
        state.stdout_summary = {k: round(v, 6) if isinstance(v, float) else v for k, v in state.summary.items()}
        return "__done__"
