from typing import Any, List
import logging

import numpy as np

from ..exporters import export_matrix_magnitudes_csv, export_report_json, write_csv, write_json
from ..protocol import amplify, decoherence_sweep, target_fidelity_curve, truncation_convergence
from ..units import KHZ


class SimulateFlowHelper:
    """Full amplification pipeline for one scenario.

    - Single run: report JSON (optionally with the final cavity state), fidelity-vs-alpha' CSV and |rho_mn| CSV
    - `kappa_levels`: one report per cavity decay rate, tied qubit rates, run in parallel
    - `convergence_check`: reruns at cavity_dim + 5 and records both fidelities
    Returns "__done__" always.
    """

    @staticmethod
    def handle(state: Any, logger: logging.Logger) -> str:
        cfg = state.config
        out = state.out_path
        protocol = cfg.protocol_config(state.simulation_dim())
        logger.info(
            "SimulateFlow.start: alpha=%.3f parity=%s k=%d %s",
            cfg.alpha, cfg.parity, cfg.k, protocol.effective_device().describe(),
        )

        if cfg.kappa_levels:
            rows: List[list] = []
            for i, (kappa, report) in enumerate(decoherence_sweep(cfg.alpha, cfg.parity, cfg.k, protocol, cfg.kappa_levels)):
                state.add_output(export_report_json(out / f"report_kappa{i}.json", report, include_state=cfg.snapshot))
                rows.append([kappa / KHZ, report.fidelity_vs_target, report.best_alpha_prime, report.gain])
            state.add_output(write_csv(out / "decoherence_sweep.csv", ["kappa_khz", "fidelity", "alpha_prime", "gain"], rows))
            state.summary = {"levels": len(rows), "fidelities": [r[1] for r in rows]}
            state.stdout_summary = {"F": [round(r[1], 6) for r in rows], "G": [round(r[3], 6) for r in rows]}
            return "__done__"

        report = amplify(cfg.alpha, cfg.parity, cfg.k, protocol)
        state.add_output(export_report_json(out / "report.json", report, include_state=cfg.snapshot))
        if cfg.alpha_prime_grid is not None:
            grid = cfg.alpha_prime_grid.values()
        else:
            grid = np.round(np.arange(cfg.alpha, 2.5 * cfg.alpha + 1e-9, 0.01), 10).tolist()
        curve = target_fidelity_curve(report.final_cavity_state, report.target_parity, grid)
        state.add_output(write_csv(out / "fidelity_curve.csv", ["alpha_prime", "fidelity"], curve))
        state.add_output(export_matrix_magnitudes_csv(out / "cavity_density_abs.csv", report.final_cavity_state))
        state.summary = report.model_dump(mode="json")
        state.stdout_summary = {"F": round(report.fidelity_vs_target, 6), "G": round(report.gain, 6)}

        if cfg.convergence_check:
            check = truncation_convergence(cfg.alpha, cfg.parity, cfg.k, protocol)
            state.add_output(write_json(out / "convergence.json", {
                "cavity_dims": list(check.cavity_dims),
                "fidelities": list(check.fidelities),
                "gains": list(check.gains),
                "fidelity_change": check.fidelity_change,
            }))
            logger.info("SimulateFlow.convergence: change=%.2e across N_c=%s", check.fidelity_change, check.cavity_dims)
        return "__done__"
