from typing import Any
import logging

from ..exporters import write_csv, write_json
from ..states import CatSpec, optimal_gain, theory_curve


class TheoryFlowHelper:
    """Ideal-shift analysis: `theory-gain` (optimal G' and F) and `theory-curve` (F over an alpha' grid).

    Returns "__done__" always.
    """

    @staticmethod
    def handle(state: Any, logger: logging.Logger) -> str:
        cfg = state.config
        spec = CatSpec(alpha=cfg.alpha, parity=cfg.parity)
        out = state.out_path

        if cfg.mode == "theory-gain":
            result = optimal_gain(spec, k=cfg.k)
            logger.info(
                "TheoryFlow.gain: alpha=%.3f parity=%s k=%d -> G=%.4f F=%.4f",
                cfg.alpha, cfg.parity, cfg.k, result.gain, result.fidelity,
            )
            state.add_output(write_json(out / "theory_gain.json", result.model_dump()))
            state.summary = result.model_dump()
            state.stdout_summary = {"F_max": round(result.fidelity, 6), "G": round(result.gain, 6)}
            return "__done__"

        grid = cfg.alpha_prime_grid.values()
        curve = theory_curve(spec, cfg.k, grid)
        state.add_output(write_csv(out / "theory_curve.csv", ["alpha_prime", "fidelity"], curve))
        best = max(curve, key=lambda p: p[1]) if curve else (float("nan"), float("nan"))
        logger.info("TheoryFlow.curve: %d points, max F=%.4f at alpha'=%.3f", len(curve), best[1], best[0])
        state.summary = {"points": len(curve), "alpha_prime_at_max": best[0], "max_fidelity": best[1]}
        state.stdout_summary = {"F_max": round(best[1], 6), "alpha_prime": round(best[0], 6)}
        return "__done__"
