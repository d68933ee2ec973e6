from typing import Any
import logging

from ..exporters import export_wigner_csv, export_wigner_json
from ..protocol import ideal_shift
from ..states import CatSpec, cat_ket, required_cavity_dim
from ..wigner import wigner


class WignerFlowHelper:
    """Wigner grid of |SC_alpha>, optionally after an exact k-photon shift.

    Returns "__done__" always.
    """

    @staticmethod
    def handle(state: Any, logger: logging.Logger) -> str:
        cfg = state.config
        shift = cfg.wigner.ideal_shift
        dim = state.cavity_dim or required_cavity_dim(cfg.alpha) + shift
        cat = cat_ket(CatSpec(alpha=cfg.alpha, parity=cfg.parity), dim)
        source = ideal_shift(cat, shift) if shift else cat
        grid = wigner(source, cfg.wigner.grid_spec())
        out = state.out_path
        state.add_output(export_wigner_csv(out / "wigner.csv", grid))
        state.add_output(export_wigner_json(out / "wigner.json", grid))
        state.summary = {"origin": grid.value_at(0.0, 0.0), "integral": grid.integral(), "cavity_dim": dim}
        logger.info("WignerFlow.done: W(0)=%.5f integral=%.4f", state.summary["origin"], state.summary["integral"])
        state.stdout_summary = {"W0": round(state.summary["origin"], 6), "integral": round(state.summary["integral"], 6)}
        return "__done__"
