#!/usr/bin/env python3
"""Render figures and a text table from an experiment report directory.

Reads only the documented report files (bounds.csv, geps.csv, summary.json) and
writes one PNG per figure plus a text table:

    python plots/render.py --report-dir out --out-dir figures
    python plots/render.py geps --report-dir out --out-dir figures

Commands: bounds, mu, geps, table, all (default). Exit codes: 1 usage, 3 bad or
missing input data.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

EXIT_USAGE = 1
EXIT_DATA = 3

FIGSIZE = (6.4, 4.2)
DPI = 120
# fixed metadata so re-rendering produces byte-identical files
PNG_METADATA = {"Software": "aebound-plots"}


class RenderError(Exception):
    pass


@dataclass(frozen=True)
class FigureSpec:
    """One line chart: which CSV, which columns, where the image goes."""

    csv_name: str
    x_column: str
    y_series: tuple[tuple[str, str, str], ...]  # (column, legend label, style)
    out_name: str
    title: str
    x_label: str
    y_label: str
    y_limits: tuple[float, float] | None = None

    def columns(self) -> list[str]:
        return [self.x_column] + [c for c, _, _ in self.y_series]


def read_report_csv(path: Path) -> list[dict[str, float]]:
    """Parse a report CSV into float-valued rows, tracking line numbers."""
    if not path.exists():
        raise RenderError(f"missing file: {path}")
    rows = []
    with open(path, "r", newline="", encoding="ascii") as fh:
        data_lines = []
        for lineno, line in enumerate(fh, start=1):
            if not line.startswith("#"):
                data_lines.append((lineno, line))
    if not data_lines:
        raise RenderError(f"{path} is empty")
    header_line, header_text = data_lines[0]
    try:
        header = next(csv.reader([header_text]))
    except csv.Error as err:
        raise RenderError(f"{path} line {header_line}: {err}") from None
    for lineno, text in data_lines[1:]:
        try:
            values = next(csv.reader([text]))
        except csv.Error as err:
            raise RenderError(f"{path} line {lineno}: {err}") from None
        if len(values) != len(header):
            raise RenderError(
                f"{path} line {lineno}: {len(values)} fields, header has {len(header)}")
        row = {}
        for col, val in zip(header, values):
            try:
                row[col] = float(val)
            except ValueError:
                raise RenderError(
                    f"{path} line {lineno}: column {col!r} is not numeric: {val!r}"
                ) from None
        rows.append(row)
    return rows


def column(rows: list[dict], name: str, path: Path) -> list[float]:
    missing = [r for r in rows if name not in r]
    if not rows or missing:
        raise RenderError(f"{path}: missing expected column {name!r}")
    return [r[name] for r in rows]


def _save(fig, out_path: Path):
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def render_figure(spec: FigureSpec, report_dir: Path, out_dir: Path) -> Path:
    path = report_dir / spec.csv_name
    rows = read_report_csv(path)
    if not rows:
        raise RenderError(f"{path} has a header but no data rows")
    series = {name: column(rows, name, path) for name in spec.columns()}
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for col, label, style in spec.y_series:
        ax.plot(series[spec.x_column], series[col], style, label=label)
    ax.set_xlabel(spec.x_label)
    ax.set_ylabel(spec.y_label)
    ax.set_title(spec.title)
    if spec.y_limits is not None:
        ax.set_ylim(*spec.y_limits)
    if len(spec.y_series) > 1:
        ax.legend()
    ax.grid(True, alpha=0.3)
    out = out_dir / spec.out_name
    _save(fig, out)
    return out


BOUND_VS_FRACTION = FigureSpec(
    csv_name="bounds.csv",
    x_column="sample_frac",
    y_series=(("delta_term_normalized", "normalized bound", "o-"),
              ("test_margin_loss_g1", "test margin loss", "s--")),
    out_name="bound_vs_fraction.png",
    title="Generalization bound vs observed test margin loss",
    x_label="training fraction",
    y_label="value",
)

MU_BOUNDS = FigureSpec(
    csv_name="bounds.csv",
    x_column="sample_frac",
    y_series=(("mu_hat", "observed mean L2 error", "o-"),
              ("mu_bound_worst", "worst-case bound", "s--"),
              ("mu_bound_symmetric", "symmetric-error bound", "d:")),
    out_name="mu_bounds.png",
    title="Mean reconstruction error vs predicted bounds",
    x_label="training fraction",
    y_label="L2 error",
)

GEPS_CURVE = FigureSpec(
    csv_name="geps.csv",
    x_column="eps_over_mu",
    y_series=(("fraction_in", "fraction inside", "o-"),),
    out_name="geps_curve.png",
    title="Low-deviation set coverage",
    x_label="epsilon / mean L2 error",
    y_label="fraction of test samples inside",
    y_limits=(0.0, 1.05),
)


def render_bound_vs_fraction(report_dir: Path, out_dir: Path) -> Path:
    """Normalized generalization bound and test margin loss over the sweep."""
    return render_figure(BOUND_VS_FRACTION, report_dir, out_dir)


def render_mu_bounds(report_dir: Path, out_dir: Path) -> Path:
    """Mean L2 reconstruction error against its worst-case and symmetric bounds."""
    return render_figure(MU_BOUNDS, report_dir, out_dir)


def render_geps_curve(report_dir: Path, out_dir: Path) -> Path:
    """Coverage of the low-deviation set as epsilon grows relative to the mean error."""
    return render_figure(GEPS_CURVE, report_dir, out_dir)


def render_summary_table(report_dir: Path, out_dir: Path) -> Path:
    """Text table of the margin/Lipschitz/improvement summary quantities."""
    path = report_dir / "summary.json"
    if not path.exists():
        raise RenderError(f"missing file: {path}")
    with open(path, "r", encoding="ascii") as fh:
        summary = json.load(fh)
    table = summary.get("table")
    if not table:
        raise RenderError(f"{path} has no 'table' section; run the report command "
                          "after the geometry pass")
    for key in ("n_to_nb", "eta", "eta_prime", "c_upper", "c_empirical",
                "improvement_factor"):
        if key not in table:
            raise RenderError(f"{path}: missing expected column {key!r}")
    lines = [
        f"{'dims':>10}  {'margin':>8}  {'encoded':>8}  {'C_upper':>8}  "
        f"{'C_emp':>8}  {'improvement':>11}",
        f"{table['n_to_nb']:>10}  {table['eta']:>8.3f}  {table['eta_prime']:>8.3f}  "
        f"{table['c_upper']:>8.3f}  {table['c_empirical']:>8.3f}  "
        f"{table['improvement_factor']:>11.3f}",
    ]
    agg = summary.get("ssl_aggregate")
    if agg:
        lines.append("")
        lines.append(
            f"ssl error {agg['mean_ssl_error']:.4f} +- {agg['std_ssl_error']:.4f}  "
            f"vs supervised {agg['mean_supervised_error']:.4f} "
            f"+- {agg['std_supervised_error']:.4f}  ({agg['n_seeds']} seeds)")
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / "summary_table.txt"
    out.write_text("\n".join(lines) + "\n", encoding="ascii")
    return out


RENDERERS = {
    "bounds": render_bound_vs_fraction,
    "mu": render_mu_bounds,
    "geps": render_geps_curve,
    "table": render_summary_table,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def main(argv=None) -> int:
    parser = _Parser(prog="render.py", description=__doc__)
    parser.add_argument("command", nargs="?", default="all",
                        choices=[*RENDERERS, "all"])
    parser.add_argument("--report-dir", required=True, type=Path)
    parser.add_argument("--out-dir", required=True, type=Path)
    args = parser.parse_args(argv)
    names = list(RENDERERS) if args.command == "all" else [args.command]
    try:
        for name in names:
            out = RENDERERS[name](args.report_dir, args.out_dir)
            print(f"wrote {out}")
    except RenderError as err:
        print(f"render error: {err}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
