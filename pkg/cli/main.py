import argparse
import logging
from typing import List, Optional

from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from cli.config import TOOL_VERSION, get_settings
from cli.models import RunConfig
from cli.services import run_command

console = Console()

# Flags that are handled by RunConfig itself rather than passed as command parameters.
COMMON_FLAGS = {"command", "device", "out", "seed", "threads", "format", "log_level"}


def log_process_step(step_name, details=None):
    """Log a processing step with optional details."""
    log_msg = f"PROCESS: {step_name}"
    if details:
        log_msg += f" - {details}"
    logging.warning(log_msg)
    return log_msg


def _floats(text: str) -> List[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def define_args(argv: Optional[List[str]] = None):
    settings = get_settings()
    parser = argparse.ArgumentParser(description="Coupler-drive ZZ cancellation simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--device",
        default="data/two-qubit.device",
        help="Device file with unit-suffixed frequencies",
    )
    common.add_argument(
        "--out",
        default=settings["out_dir"],
        help="Output directory (ZZCANCEL_OUT_DIR)",
    )
    common.add_argument("--seed", type=int, default=0, help="Seed for every random draw")
    common.add_argument(
        "--threads",
        type=int,
        default=settings["threads"],
        help="Worker count for sweeps (ZZCANCEL_THREADS)",
    )
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="Tabular output format")
    common.add_argument(
        "--log-level",
        default=settings["log_level"],
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Logging level (ZZCANCEL_LOG_LEVEL)",
    )

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="Dispersive summary and perturbative ZZ")

    zzmap = sub.add_parser("zzmap", parents=[common], help="Net ZZ over drive frequency and amplitude")
    zzmap.add_argument("--freq-min", type=float, default=-0.016, help="Lowest offset from omega_c^gg in GHz")
    zzmap.add_argument("--freq-max", type=float, default=0.004, help="Highest offset from omega_c^gg in GHz")
    zzmap.add_argument("--n-freq", type=int, default=41, help="Frequency points")
    zzmap.add_argument("--amp-max", type=float, default=2.0, help="Largest drive amplitude in MHz")
    zzmap.add_argument("--n-amp", type=int, default=21, help="Amplitude points")

    cancel = sub.add_parser("cancel", parents=[common], help="Drive amplitude that nulls the net ZZ")
    cancel.add_argument("--drive-freq", type=float, default=None, help="Drive frequency in GHz")
    cancel.add_argument("--amp-max", type=float, default=2.0, help="Upper end of the amplitude bracket in MHz")

    ramsey = sub.add_parser("ramsey", parents=[common], help="Echoed ZZ Ramsey per drive amplitude")
    ramsey.add_argument("--amps", type=_floats, default=None, help="Comma-separated amplitudes in MHz")
    ramsey.add_argument("--drive-freq", type=float, default=None, help="Drive frequency in GHz")
    ramsey.add_argument("--delay-max", type=float, default=30.0, help="Longest window in µs")
    ramsey.add_argument("--n-delay", type=int, default=61, help="Delay points")
    ramsey.add_argument("--shifts", action="store_true", help="Also run the conditional frequency-shift study")

    tomo = sub.add_parser("tomo", parents=[common], help="Idle tomography with and without cancellation")
    tomo.add_argument("--delays", type=_floats, default=None, help="Comma-separated idle durations in µs")
    tomo.add_argument("--amp", type=float, default=None, help="Drive amplitude in MHz, the cancellation root by default")
    tomo.add_argument("--drive-freq", type=float, default=None, help="Drive frequency in GHz")
    tomo.add_argument("--shots", type=int, default=None, help="Binomial shots per expectation value")

    correlations = sub.add_parser("correlations", parents=[common], help="Simultaneous Ramsey and C_zz")
    correlations.add_argument("--amps", type=_floats, default=None, help="Comma-separated amplitudes in MHz")
    correlations.add_argument("--drive-freq", type=float, default=None, help="Drive frequency in GHz")
    correlations.add_argument("--delay-max", type=float, default=10.0, help="Longest delay in µs")
    correlations.add_argument("--n-delay", type=int, default=101, help="Delay points")

    rb = sub.add_parser("rb", parents=[common], help="Interleaved RB error versus idle duration")
    rb.add_argument("--taus", type=_floats, default=None, help="Comma-separated idle durations in µs")
    rb.add_argument("--n-random", type=int, default=80, help="Randomizations per sequence length")
    rb.add_argument("--m-max", type=int, default=100, help="Longest sequence length")
    rb.add_argument(
        "--dephasing",
        choices=("t2_star", "t2_echo", "none"),
        default="t2_star",
        help="Coherence time used for pure dephasing",
    )
    rb.add_argument("--residual-chi-zz", type=float, default=None, help="Residual ZZ in kHz with cancellation on")

    leakage = sub.add_parser("leakage", parents=[common], help="Coupler excitation versus pulse edge duration")
    leakage.add_argument("--edges", type=_floats, default=None, help="Comma-separated edge durations in µs")
    leakage.add_argument("--amp", type=float, default=None, help="Drive amplitude in MHz, the cancellation root by default")
    leakage.add_argument("--drive-freq", type=float, default=None, help="Drive frequency in GHz")
    leakage.add_argument("--plateau", type=float, default=1.0, help="Shortest plateau in µs")

    chain = sub.add_parser("chain", parents=[common], help="Three-qubit chain pairwise ZZ maps")
    chain.add_argument("--detuning-span", type=float, default=200.0, help="Half-width of the Delta12 axis in MHz")
    chain.add_argument("--n-detuning", type=int, default=9, help="Detuning points")
    chain.add_argument("--amp-max", type=float, default=3.0, help="Largest coupler amplitude in MHz")
    chain.add_argument("--n-amp", type=int, default=16, help="Amplitude points per coupler")

    return parser.parse_args(argv)


def display_summary(command: str, summary) -> None:
    table = Table(title=f"{command} summary")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green", justify="right")
    for key, value in summary.items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one simulator command.

    Command line arguments (shared by every subcommand):
    --device: Device file (default: data/two-qubit.device)
    --out: Output directory (default: results)
    --seed: Seed recorded in the manifest and used by every random draw (default: 0)
    --threads: Worker count for sweeps (default: 1)
    --format: csv or json for tabular outputs (default: csv)
    --log-level: Logging level (default: WARNING)

    Returns:
        Process exit code: 0 on success, 1 on a simulator error, 2 on a configuration error
    """
    args = define_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s - %(levelname)s - %(message)s")

    params = {key: value for key, value in vars(args).items() if key not in COMMON_FLAGS and value is not None}
    try:
        config = RunConfig(
            command=args.command,
            device=args.device,
            out_dir=args.out,
            seed=args.seed,
            threads=args.threads,
            format=args.format,
            params=params,
        )
    except ValidationError as exc:
        console.print(Panel.fit(str(exc), title="Invalid arguments", border_style="red"))
        return 2
    log_process_step("Run", f"{config.command} on {config.device.name}")

    with Progress(
        SpinnerColumn(),
        TextColumn("[bold blue]{task.description}"),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    ) as progress:
        progress.add_task(f"Running {config.command}...", total=None)
        result = run_command(config)

    if not result["success"]:
        console.print(Panel.fit(f"[bold red]{result['error']}[/bold red]", title=f"{config.command} failed", border_style="red"))
        return result["exit_code"]

    log_process_step("Outputs", ", ".join(str(path) for path in result["files"]))
    display_summary(config.command, result.get("summary", {}))
    console.print(
        Panel.fit(
            "\n".join(str(path) for path in [*result["files"], result["manifest"]]),
            title="Files written",
            border_style="green",
        )
    )
    return 0
