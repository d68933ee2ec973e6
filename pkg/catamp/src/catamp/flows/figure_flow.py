from typing import Any, Callable, Dict, List
import logging

import numpy as np

from ..config_loader import get_reference_defaults
from ..exporters import export_matrix_magnitudes_csv, export_report_json, export_wigner_csv, write_csv, write_json
from ..hilbert import FockKet
from ..jc_model import DeviceParams
from ..protocol import ProtocolConfig, amplify, decoherence_sweep, stirap_scan
from ..states import CatSpec, cat_ket, optimal_gain, shift_op, theory_curve
from ..units import KHZ, US
from ..wigner import WignerGridSpec, wigner
from .stirap_flow import symmetry_report


def _fig1(state: Any, logger: logging.Logger) -> None:
    """F^{+-} against G' for the four reference amplitudes, k = 2, with optimal markers."""
    theory = get_reference_defaults().get("theory", {})
    lo, hi = theory.get("gain_bounds", [1.0, 3.0])
    gains = np.round(np.linspace(lo, hi, int(round((hi - lo) / 0.01)) + 1), 10)
    rows, maxima = [], []
    for parity in ("even", "odd"):
        for alpha in theory.get("alphas", [1.0, 1.5, 2.0, 2.5]):
            spec = CatSpec(alpha=alpha, parity=parity)
            for g, f in theory_curve(spec, 2, (gains * alpha).tolist()):
                rows.append([parity, alpha, g / alpha, f])
            best = optimal_gain(spec, k=2)
            maxima.append(best.model_dump())
            logger.info("FigureFlow.fig1: parity=%s alpha=%.1f F_max=%.4f G=%.4f", parity, alpha, best.fidelity, best.gain)
    out = state.out_path
    state.add_output(write_csv(out / "fig1_curves.csv", ["parity", "alpha", "gain", "fidelity"], rows))
    state.add_output(write_json(out / "fig1_maxima.json", maxima))
    state.summary = {"curves": 2 * len(theory.get("alphas", [])), "maxima": maxima}


def _fig3a(state: Any, logger: logging.Logger) -> None:
    """Fock amplitudes of |SC+_1.5>, (E^dagger)^2 |SC+_1.5> and |SC+_2.1>."""
    dim = 24
    source = cat_ket(CatSpec(alpha=1.5, parity="even"), dim)
    shifted: FockKet = shift_op(dim, 2).apply(source)
    target = cat_ket(CatSpec(alpha=2.1, parity="even"), dim)
    rows = [
        [n, source.amplitudes[n].real, shifted.amplitudes[n].real, target.amplitudes[n].real]
        for n in range(dim)
    ]
    state.add_output(write_csv(state.out_path / "fig3a_amplitudes.csv", ["n", "input_1p5", "shifted_twice", "target_2p1"], rows))
    overlap = float(abs(np.vdot(target.amplitudes, shifted.amplitudes)) ** 2)
    logger.info("FigureFlow.fig3a: |<SC_2.1|E^2|SC_1.5>|^2=%.4f", overlap)
    state.summary = {"overlap": overlap}


def _protocol(state: Any) -> ProtocolConfig:
    dim = state.simulation_dim()
    return ProtocolConfig.reference_defaults(cavity_dim=dim)


def _fig3b(state: Any, logger: logging.Logger) -> None:
    """Theory bounds for k = 1, 2 at alpha = 1.5 plus simulated points at the three decoherence levels."""
    alpha = 1.5
    spec = CatSpec(alpha=alpha, parity="even")
    grid = np.round(np.arange(alpha, 2.5 * alpha + 1e-9, 0.01), 10).tolist()
    out = state.out_path
    markers = {}
    for k in (1, 2):
        curve = theory_curve(spec, k, grid)
        state.add_output(write_csv(out / f"fig3b_theory_k{k}.csv", ["alpha_prime", "fidelity"], curve))
        markers[f"k{k}"] = optimal_gain(spec, k=k).model_dump()

    protocol = _protocol(state)
    rows: List[list] = []
    for k in (1, 2):
        for i, (kappa, report) in enumerate(decoherence_sweep(alpha, "even", k, protocol)):
            state.add_output(export_report_json(out / f"fig3b_sim_k{k}_level{i}.json", report))
            rows.append([k, kappa / KHZ, report.fidelity_vs_target, report.best_alpha_prime, report.gain])
    state.add_output(write_csv(out / "fig3b_simulated.csv", ["k", "kappa_khz", "fidelity", "alpha_prime", "gain"], rows))
    state.add_output(write_json(out / "fig3b_markers.json", markers))
    logger.info("FigureFlow.fig3b: theory F(k=1)=%.4f F(k=2)=%.4f", markers["k1"]["fidelity"], markers["k2"]["fidelity"])
    state.summary = {"markers": markers, "simulated": rows}


def _fig4(state: Any, logger: logging.Logger) -> None:
    """|rho_mn| and Wigner grids: (a) input, (b) after E^dagger, (c) after (E^dagger)^2, (d) (c) with kappa/2pi = 0.25 kHz."""
    protocol = _protocol(state)
    dim = protocol.device.cavity_dim
    points = 41 if state.fast else WignerGridSpec().points
    spec = WignerGridSpec(points=points)
    decoherent = protocol.with_device(protocol.device.with_cavity_decay(0.25 * KHZ))
    clean = protocol.with_device(protocol.device.without_decoherence())
    panels = {
        "a": cat_ket(CatSpec(alpha=1.5, parity="even"), dim).projector(),
        "b": amplify(1.5, "even", 1, clean).final_cavity_state,
        "c": amplify(1.5, "even", 2, clean).final_cavity_state,
        "d": amplify(1.5, "even", 2, decoherent).final_cavity_state,
    }
    out = state.out_path
    signs: Dict[str, float] = {}
    for name, rho in panels.items():
        state.add_output(export_matrix_magnitudes_csv(out / f"fig4{name}_density_abs.csv", rho))
        grid = wigner(rho, spec)
        state.add_output(export_wigner_csv(out / f"fig4{name}_wigner.csv", grid))
        signs[name] = grid.value_at(0.0, 0.0)
        logger.info("FigureFlow.fig4: panel %s W(0)=%.4f", name, signs[name])
    state.add_output(write_json(out / "fig4_central_fringe.json", signs))
    state.summary = {"central_fringe": signs}


def _fig5(state: Any, logger: logging.Logger) -> None:
    """Single-manifold STIRAP efficiency against tau."""
    defaults = get_reference_defaults().get("stirap_scan", {})
    taus = [float(t) * US for t in defaults.get("tau_us", [])]
    if state.fast:
        taus = [t for t in taus if abs(t) <= 12.56 * US]
    protocol = ProtocolConfig(device=DeviceParams(cavity_dim=int(defaults.get("cavity_dim", 6))))
    protocol = protocol.model_copy(update={"integrator": protocol.integrator.model_copy(update={"progress": False})})
    points = stirap_scan(taus, None, protocol)
    state.add_output(write_csv(state.out_path / "fig5_stirap.csv", ["tau_us", "efficiency"], [(t / US, e) for t, e in points]))
    state.summary = {"points": len(points), **symmetry_report(points)}
    logger.info("FigureFlow.fig5: %s", state.summary)


FIGURES: Dict[str, Callable[[Any, logging.Logger], None]] = {
    "fig1": _fig1,
    "fig3a": _fig3a,
    "fig3b": _fig3b,
    "fig4": _fig4,
    "fig5": _fig5,
}


class FigureFlowHelper:
    """Emits the data behind one published figure into the output directory.

    Returns "__done__" always.
    """

    @staticmethod
    def handle(state: Any, logger: logging.Logger) -> str:
        FIGURES[state.figure](state, logger)
        return "__done__"
