"""
Enhanced UI components for SecLand
Banner, progress bars, result tables and summary panels
"""

from typing import Any, Dict, List, Mapping, Optional, Sequence

from rich.align import Align
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn, TimeElapsedColumn
from rich.table import Table
from rich.text import Text

from . import __version__
from .eval.pckh import PckhResult

console = Console()
# Progress and errors go to stderr so stdout stays clean for piping
err_console = Console(stderr=True)


def set_color(enabled: bool):
    for target in (console, err_console):
        target.no_color = not enabled
        if not enabled:
            target._color_system = None


def print_enhanced_banner():
    """Print the SecLand banner"""
    banner_lines = [
        ("███████╗███████╗ ██████╗██╗      █████╗ ███╗   ██╗██████╗ ", "bold bright_blue"),
        ("██╔════╝██╔════╝██╔════╝██║     ██╔══██╗████╗  ██║██╔══██╗", "bold bright_cyan"),
        ("███████╗█████╗  ██║     ██║     ███████║██╔██╗ ██║██║  ██║", "bold bright_green"),
        ("╚════██║██╔══╝  ██║     ██║     ██╔══██║██║╚██╗██║██║  ██║", "bold bright_yellow"),
        ("███████║███████╗╚██████╗███████╗██║  ██║██║ ╚████║██████╔╝", "bold bright_magenta"),
        ("╚══════╝╚══════╝ ╚═════╝╚══════╝╚═╝  ╚═╝╚═╝  ╚═══╝╚═════╝ ", "bold bright_red"),
    ]

    banner_text = Text()
    for line, style in banner_lines:
        banner_text.append(line + "\n", style=style)

    banner_text.append("\n")
    banner_text.append("🦴 Secondary Landmark Learning from Multiview Geometry ", style="bold bright_white")
    banner_text.append("• ", style="dim white")
    banner_text.append(f"v{__version__}", style="bold green")
    banner_text.append("\n\n")

    features = [
        ("📐", "Two-View Triangulation", "bright_white"),
        ("🧭", "Canonical Body Frames", "bright_yellow"),
        ("🎯", "Soft-Argmax Detector", "bright_red"),
        ("🔗", "Cross-View Contrastive Features", "bright_green"),
        ("📊", "PCKh Reports", "bright_blue"),
    ]
    for icon, text, color in features:
        banner_text.append(f"{icon} {text}  ", style=color)
    banner_text.append("\n")

    err_console.print(Panel(
        Align.center(banner_text),
        border_style="bright_blue",
        padding=(1, 2),
        title="[bold bright_white on blue] SecLand [/]",
        title_align="center",
        subtitle="[dim bright_cyan]Self-Supervised Secondary Landmarks[/]",
        subtitle_align="center",
    ))


def create_enhanced_progress() -> Progress:
    """Progress bar on stderr"""
    return Progress(
        SpinnerColumn(),
        TextColumn("[bold bright_white]{task.description}"),
        BarColumn(bar_width=40, complete_style="bright_green", finished_style="bold green"),
        TaskProgressColumn(),
        TimeElapsedColumn(),
        TextColumn("{task.fields[status]}", style="dim"),
        console=err_console,
        transient=False,
    )


def _rate(value: Optional[float]) -> Text:
    if value is None or value != value:
        return Text("n/a", style="dim red")
    if value >= 0.75:
        style = "bold green"
    elif value >= 0.5:
        style = "bold yellow"
    else:
        style = "bold red"
    return Text(f"{value:.3f}", style=style)


def create_pckh_table(result: PckhResult, thresholds: Sequence[float], title: str = "PCKh") -> Table:
    """Per-landmark rates at the given thresholds, secondary landmarks first"""
    table = Table(title=title, show_header=True, header_style="bold bright_white on blue",
                  border_style="bright_blue", row_styles=["", "dim"])
    table.add_column("🦴 Landmark", style="bold bright_cyan", no_wrap=True)
    table.add_column("Kind", style="dim")
    for t in thresholds:
        table.add_column(f"@{t:g}", justify="right")

    order = result.secondary_indices + result.primary_indices
    for k in order:
        kind = 'secondary' if k >= result.num_primary else 'primary'
        table.add_row(result.landmark_names[k], kind, *[_rate(result.rate(t, k)) for t in thresholds])
    table.add_row(Text("mean secondary", style="bold"), "",
                  *[_rate(result.secondary_mean(t)) for t in thresholds])
    table.add_row(Text("mean primary", style="bold"), "", *[_rate(result.primary_mean(t)) for t in thresholds])
    return table


def create_subspace_table(summary: List[Mapping[str, Any]]) -> Table:
    """Per-configuration pixel errors of the 2D and 3D shared spaces"""
    table = Table(title="Shared-space reconstruction", show_header=True,
                  header_style="bold bright_white on blue", border_style="bright_blue", row_styles=["", "dim"])
    table.add_column("⚙️ Configuration", style="bold bright_cyan", no_wrap=True)
    table.add_column("Primaries", justify="right")
    columns = [('error_2d_px', "2D error (px)"), ('error_3d_px', "3D error (px)"), ('ratio', "3D / 2D"),
               ('pckh_2d', "PCKh 2D"), ('pckh_3d', "PCKh 3D")]
    present = [(key, label) for key, label in columns if summary and key in summary[0]]
    for _, label in present:
        table.add_column(label, justify="right")
    for entry in summary:
        cells = []
        for key, _ in present:
            value = entry.get(key)
            if key.startswith('pckh'):
                cells.append(_rate(value))
            elif key == 'ratio':
                style = "bold green" if value is not None and value < 1 else "bold red"
                cells.append(Text(f"{value:.3f}", style=style))
            else:
                cells.append(f"{value:.2f}")
        table.add_row(str(entry['config']), str(entry['included']), *cells)
    return table


def create_results_table(rows: List[Mapping[str, Any]], title: str, threshold: float = 0.5) -> Table:
    """One line per run: mean primary and secondary PCKh at one threshold, or its error"""
    table = Table(title=title, show_header=True, header_style="bold bright_white on blue",
                  border_style="bright_blue", row_styles=["", "dim"])
    for label in ("Method", "Mode", "Label ratio", "Primaries"):
        table.add_column(label, style="bright_cyan" if label == "Method" else None, no_wrap=True)
    table.add_column(f"Secondary @{threshold:g}", justify="right")
    table.add_column(f"Primary @{threshold:g}", justify="right")

    runs: Dict[tuple, Dict[str, Any]] = {}
    for row in rows:
        key = (row.get('method'), row.get('mode'), row.get('label_ratio'), row.get('primaries'))
        entry = runs.setdefault(key, {})
        if row.get('error'):
            entry['error'] = row['error']
        elif row.get('kind') == 'mean' and abs(float(row.get('threshold')) - threshold) < 1e-9:
            entry[row['landmark']] = row.get('pckh')

    for (method, mode, ratio, primaries), entry in runs.items():
        ratio_text = f"{ratio:.3f}" if isinstance(ratio, float) else str(ratio or '')
        if 'error' in entry:
            table.add_row(str(method), str(mode or ''), ratio_text, str(primaries or ''),
                          Text("failed", style="bold red"), Text(str(entry['error'])[:40], style="dim red"))
            continue
        table.add_row(str(method), str(mode or ''), ratio_text, str(primaries or ''),
                      _rate(entry.get('mean_secondary')), _rate(entry.get('mean_primary')))
    return table


def print_run_summary(title: str, items: Mapping[str, Any], style: str = "bright_green"):
    """Key/value summary panel"""
    summary_text = Text()
    for key, value in items.items():
        summary_text.append(f"{key}: ", style="bright_white")
        if isinstance(value, float):
            value = f"{value:.4f}"
        summary_text.append(f"{value}\n", style="bold bright_cyan")

    console.print(Panel(
        summary_text,
        border_style=style,
        padding=(1, 2),
        title=f"[bold bright_white on green] {title} [/]",
        title_align="center",
    ))


def print_error(payload: Mapping[str, Any]):
    """Structured error message on stderr"""
    text = Text()
    text.append(f"❌ {payload.get('error', 'error')}: ", style="bold red")
    text.append(f"{payload.get('message', '')}\n", style="bright_white")
    for key, value in payload.items():
        if key not in ('error', 'message'):
            text.append(f"   {key}: {value}\n", style="dim")
    err_console.print(text)


def print_help_enhancement():
    """Print usage examples"""
    help_text = Text()
    help_text.append("🚀 SecLand Quick Start Guide\n\n", style="bold bright_white")

    examples = [
        ("Generate a synthetic dataset", "secland generate -o data/synth --seed 7"),
        ("Compare 2D and 3D shared spaces", "secland analyze-subspace -d data/synth --modes 2d,3d"),
        ("Train the full objective", "secland train -d data/synth --mode full -o runs/full"),
        ("Evaluate a checkpoint", "secland evaluate -d data/synth -m runs/full/final.json --correlation"),
        ("Label-ratio ablation", "secland ablate -d data/synth --modes all --ratios 0.014,0.043,0.071,0.1"),
        ("Baselines with detected primaries", "secland baselines -d data/synth -m runs/full/final.json"),
        ("Regenerate the tables", "secland report runs/ -o runs/report"),
        ("Use a config file", "secland train -d data/synth -c secland.json --threads 4"),
    ]
    for description, command in examples:
        help_text.append(f"📌 {description}:\n", style="bright_cyan")
        help_text.append(f"   {command}\n\n", style="dim white")

    console.print(Panel(
        help_text,
        border_style="bright_blue",
        padding=(1, 2),
        title="[bold bright_white on blue] Usage Examples [/]",
        title_align="center",
    ))
