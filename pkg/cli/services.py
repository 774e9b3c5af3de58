import csv
import json
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
from pydantic import BaseModel

from cli.config import TOOL_VERSION, config_hash, load_device
from cli.models import ResultManifest, RunConfig
from src.cancel import find_cancellation, operating_frequency, zz_map
from src.chain import cancellation_amplitude, simultaneous_cancellation, with_operating_tones, zz_vs_detuning_and_amp
from src.common.errors import ConfigError, NoSignChangeError, ResonantDenominatorError, ZZCancelError
from src.device import DriveTone
from src.dynamics import coupler_leakage_vs_edges
from src.experiments.correlations import CORRELATION_AMPLITUDES, correlation_amplitude_sweep
from src.experiments.ramsey import echoed_zz_ramsey, frequency_shifts
from src.experiments.tomography import idle_tomography_suite
from src.rb import DEFAULT_M_AXIS, NoiseChannel, coherence_limit_slope, error_vs_idle_duration
from src.spectrum import dispersive_summary, perturbative_chi_zz, perturbative_inputs

logger = logging.getLogger(__name__)


def _jsonable(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, BaseModel):
        return value.model_dump()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.write_text(json.dumps(payload, indent=2, default=_jsonable))
    return path


def write_table(config: RunConfig, stem: str, header: Sequence[str], rows: Sequence[Sequence[float]]) -> Path:
    """Write one table as CSV (header row first) or as JSON records, by the run's format."""
    if config.format == "json":
        records = [dict(zip(header, row)) for row in rows]
        return write_json(config.out_dir / f"{stem}.json", {"seed": config.seed, "columns": list(header), "rows": records})
    path = config.out_dir / f"{stem}.csv"
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([value if isinstance(value, (int, str)) else f"{value:.10g}" for value in row])
    return path


def emit(config: RunConfig, stem: str, result: BaseModel) -> Path:
    """Tabular output of a result model: its own CSV writer or its JSON dump."""
    if config.format == "json":
        return write_json(config.out_dir / f"{stem}.json", {"seed": config.seed, "data": result.model_dump()})
    return result.to_csv(config.out_dir / f"{stem}.csv")


def _axis(params: Dict[str, Any], name: str, default: Sequence[float]) -> List[float]:
    values = params.get(name)
    return [float(v) for v in (default if values is None else values)]


def _cancellation_tone(spec, params: Dict[str, Any]) -> DriveTone:
    summary = dispersive_summary(spec)
    drive_freq = params.get("drive_freq") or operating_frequency(summary)
    amplitude = params.get("amp")
    if amplitude is None:
        amplitude = find_cancellation(spec, drive_freq).drive_amp
    return DriveTone(target=summary.coupler, frequency=drive_freq, amplitude=amplitude)


class SimulationService:
    """Service for running one simulator command and writing its outputs."""

    @staticmethod
    def cmd_spectrum(config: RunConfig) -> Dict[str, Any]:
        """
        Dispersive summary of the device and the perturbative comparison.

        Returns:
            Dict with the emitted files and the headline numbers
        """
        spec = load_device(config.device)
        summary = dispersive_summary(spec)
        try:
            inputs = perturbative_inputs(spec)
            perturbative = {"chi_zz_kHz": perturbative_chi_zz(spec), "g_eff_MHz": inputs.g_eff, **inputs.model_dump()}
        except ResonantDenominatorError as exc:
            logger.warning("perturbative estimate skipped: %s", exc)
            perturbative = {"error": str(exc)}
        payload = {"seed": config.seed, "device": spec.name, "dispersive": summary.model_dump(), "perturbative": perturbative}
        path = write_json(config.out_dir / "spectrum.json", payload)
        return {
            "success": True,
            "files": [path],
            "summary": {
                "chi1 (MHz)": summary.chi1,
                "chi2 (MHz)": summary.chi2,
                "chi_zz static (kHz)": summary.chi_zz_static,
                "chi_zz perturbative (kHz)": perturbative.get("chi_zz_kHz", float("nan")),
            },
        }

    @staticmethod
    def cmd_zzmap(config: RunConfig) -> Dict[str, Any]:
        spec = load_device(config.device)
        p = config.params
        freq_axis = np.linspace(p.get("freq_min", -0.016), p.get("freq_max", 0.004), p.get("n_freq", 41))
        amp_axis = np.linspace(0.0, p.get("amp_max", 2.0), p.get("n_amp", 21))
        result = zz_map(spec, freq_axis, amp_axis, threads=config.threads)
        return {
            "success": True,
            "files": [emit(config, "zzmap", result)],
            "summary": {"cells": result.chi_zz_grid.size, "invalid cells": int((~result.valid).sum())},
        }

    @staticmethod
    def cmd_cancel(config: RunConfig) -> Dict[str, Any]:
        spec = load_device(config.device)
        point = find_cancellation(spec, config.params.get("drive_freq"), (0.0, config.params.get("amp_max", 2.0)))
        path = write_json(config.out_dir / "cancellation.json", {"seed": config.seed, **point.model_dump()})
        return {
            "success": True,
            "files": [path],
            "summary": {
                "drive freq (GHz)": point.drive_freq,
                "drive amp (MHz)": point.drive_amp,
                "residual chi_zz (kHz)": point.residual_chi_zz,
            },
        }

    @staticmethod
    def cmd_ramsey(config: RunConfig) -> Dict[str, Any]:
        spec = load_device(config.device)
        p = config.params
        amps = _axis(p, "amps", (0.0, 0.33, 0.66))
        delays = np.linspace(0.0, p.get("delay_max", 30.0), p.get("n_delay", 61))
        traces = echoed_zz_ramsey(spec, amps, delays, drive_freq=p.get("drive_freq"), threads=config.threads)
        files = [emit(config, f"ramsey_amp{trace.drive_amplitude:.3f}", trace) for trace in traces]
        fits = [trace.model_dump(exclude={"axis", "population"}) for trace in traces]
        files.append(write_json(config.out_dir / "ramsey_fits.json", {"seed": config.seed, "fits": fits}))
        summary = {f"|chi_zz| at {t.drive_amplitude:.2f} MHz (kHz)": t.frequency for t in traces}
        if p.get("shifts"):
            shifts = frequency_shifts(spec, p.get("drive_freq"), amps, threads=config.threads)
            files.append(emit(config, "frequency_shifts", shifts))
        return {"success": True, "files": files, "summary": summary}

    @staticmethod
    def cmd_tomo(config: RunConfig) -> Dict[str, Any]:
        spec = load_device(config.device)
        p = config.params
        delays = _axis(p, "delays", np.round(np.arange(0.0, 9.6 + 1e-9, 0.6), 6))
        tone = _cancellation_tone(spec, p)
        shots = p.get("shots")
        off = idle_tomography_suite(spec, None, delays, shots=shots, seed=config.seed)
        on = idle_tomography_suite(spec, tone, delays, shots=shots, seed=config.seed)
        rows = [(a.delay, a.fidelity, a.entangling_phase, b.fidelity, b.entangling_phase) for a, b in zip(off, on)]
        header = ("delay_us", "fidelity_off", "dphi_off_rad", "fidelity_on", "dphi_on_rad")
        matrices = {
            label: [
                {"delay_us": point.delay, "real": point.rho.matrix.real, "imag": point.rho.matrix.imag}
                for point in points
            ]
            for label, points in (("off", off), ("on", on))
        }
        files = [
            write_table(config, "tomography", header, rows),
            write_json(config.out_dir / "tomography_rho.json", {"seed": config.seed, "basis": ["gg", "ge", "eg", "ee"], **matrices}),
        ]
        return {
            "success": True,
            "files": files,
            "summary": {
                "drive amp (MHz)": tone.amplitude,
                "max |dphi| on (rad)": max(abs(point.entangling_phase) for point in on),
                "min fidelity on": min(point.fidelity for point in on),
            },
        }

    @staticmethod
    def cmd_correlations(config: RunConfig) -> Dict[str, Any]:
        spec = load_device(config.device)
        p = config.params
        amps = _axis(p, "amps", CORRELATION_AMPLITUDES)
        delays = np.linspace(0.0, p.get("delay_max", 10.0), p.get("n_delay", 101))
        traces = correlation_amplitude_sweep(spec, amps, delays, drive_freq=p.get("drive_freq"), threads=config.threads)
        files = [emit(config, f"correlations_amp{trace.drive_amplitude:.3f}", trace) for trace in traces]
        return {
            "success": True,
            "files": files,
            "summary": {f"max |C_zz| at {t.drive_amplitude:.2f} MHz": t.max_abs_czz for t in traces},
        }

    @staticmethod
    def cmd_rb(config: RunConfig) -> Dict[str, Any]:
        spec = load_device(config.device)
        p = config.params
        taus = _axis(p, "taus", (0.4, 0.8, 1.2, 1.6, 2.0, 2.4, 2.8))
        m_axis = [m for m in DEFAULT_M_AXIS if m <= p.get("m_max", 100)]
        n_random = p.get("n_random", 80)
        summary = dispersive_summary(spec)
        noise = NoiseChannel.from_coherence(spec, summary.chi_zz_static, dephasing=p.get("dephasing", "t2_star"))
        residual = p.get("residual_chi_zz")
        if residual is None:
            residual = find_cancellation(spec).residual_chi_zz
        sweeps = {
            "off": error_vs_idle_duration(noise, taus, False, m_axis=m_axis, n_random=n_random, seed=config.seed,
                                          threads=config.threads),
            "on": error_vs_idle_duration(noise, taus, True, residual, m_axis=m_axis, n_random=n_random,
                                         seed=config.seed, threads=config.threads),
        }
        files = [emit(config, f"rb_error_{label}", sweep) for label, sweep in sweeps.items()]
        fits = {label: {"slope_per_us": s.slope, "chi_zz_kHz": s.chi_zz} for label, s in sweeps.items()}
        fits["coherence_limit_per_us"] = coherence_limit_slope(noise, include_dephasing=True)
        files.append(write_json(config.out_dir / "rb_fits.json", {"seed": config.seed, "n_random": n_random, **fits}))
        return {
            "success": True,
            "files": files,
            "summary": {f"1/slope {label} (µs)": 1 / s.slope if s.slope else float("inf") for label, s in sweeps.items()},
        }

    @staticmethod
    def cmd_leakage(config: RunConfig) -> Dict[str, Any]:
        spec = load_device(config.device)
        p = config.params
        edges = _axis(p, "edges", (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3))
        tone = _cancellation_tone(spec, p)
        points = coupler_leakage_vs_edges(spec, tone, edges, plateau=p.get("plateau", 1.0))
        path = write_table(config, "leakage", ("edge_us", "mean_coupler_excitation"), points)
        return {"success": True, "files": [path], "summary": {f"<n_c> at {e * 1e3:.0f} ns": n for e, n in points}}

    @staticmethod
    def cmd_chain(config: RunConfig) -> Dict[str, Any]:
        chain = with_operating_tones(load_device(config.device))
        p = config.params
        default = (chain.device.mode("Q1").frequency - chain.device.mode("Q2").frequency) * 1e3
        span = p.get("detuning_span", 200.0)
        detunings = np.linspace(default - span, default + span, p.get("n_detuning", 9))
        amps = np.linspace(0.0, p.get("amp_max", 3.0), p.get("n_amp", 16))
        detuning_grid = zz_vs_detuning_and_amp(chain, detunings, amps, threads=config.threads)
        joint = simultaneous_cancellation(chain, amps, amps, threads=config.threads)
        crossings = {}
        for label, chi in (("Q1Q2", joint.chi_12[:, 0]), ("Q2Q3", joint.chi_23[0, :])):
            try:
                crossings[label] = cancellation_amplitude(amps, chi)
            except NoSignChangeError:
                logger.warning("%s: no cancellation amplitude on the grid", label)
                crossings[label] = None
        files = [
            emit(config, "chain_detuning", detuning_grid),
            emit(config, "chain_simultaneous", joint),
            write_json(
                config.out_dir / "chain.json",
                {"seed": config.seed, "tones": [t.model_dump(mode="json") for t in chain.tones],
                 "cancellation_amp_MHz": crossings, "crossings_per_detuning": detuning_grid.crossings},
            ),
        ]
        summary = {f"{pair} cancellation amp (MHz)": amp if amp is not None else float("nan") for pair, amp in crossings.items()}
        return {"success": True, "files": files, "summary": summary}


COMMANDS = {
    "spectrum": SimulationService.cmd_spectrum,
    "zzmap": SimulationService.cmd_zzmap,
    "cancel": SimulationService.cmd_cancel,
    "ramsey": SimulationService.cmd_ramsey,
    "tomo": SimulationService.cmd_tomo,
    "correlations": SimulationService.cmd_correlations,
    "rb": SimulationService.cmd_rb,
    "leakage": SimulationService.cmd_leakage,
    "chain": SimulationService.cmd_chain,
}


def run_command(config: RunConfig) -> Dict[str, Any]:
    """
    Run one command, then write its manifest.

    Module errors are caught and reported in the returned dict; ``exit_code`` is 0 on
    success, 2 for configuration errors and 1 for every other simulator error.
    """
    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    config.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        result = COMMANDS[config.command](config)
        result["exit_code"] = 0
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        result = {"success": False, "files": [], "error": str(exc), "exit_code": 2}
    except (ZZCancelError, ValueError) as exc:
        logger.error("%s failed: %s", config.command, exc)
        result = {"success": False, "files": [], "error": f"{type(exc).__name__}: {exc}", "exit_code": 1}
    try:
        digest = config_hash(config)
    except OSError:
        digest = ""
    manifest = ResultManifest(
        command=config.command,
        config_hash=digest,
        tool_version=TOOL_VERSION,
        started=started,
        wall_clock_s=time.perf_counter() - clock,
        seed=config.seed,
        success=result["success"],
        files=[Path(f).name for f in result["files"]],
        error=result.get("error"),
    )
    path = config.out_dir / "manifest.json"
    path.write_text(manifest.model_dump_json(indent=2))
    result["manifest"] = path
    return result
