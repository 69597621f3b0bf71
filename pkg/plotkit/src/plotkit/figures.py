"""Named figure registry rendering parakpz CSV/JSON report files.

Every renderer takes the report directory and an output path, reads one or
more documented series files, and draws them.  A series file with a header
but no rows produces a figure carrying a "no data" annotation (that is a
valid, successful render).  A missing file or a schema-version mismatch is
an error.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SCHEMA_VERSION = 1

_REPORT_FILES = ("verify_report.json", "report.json", "run_manifest.json",
                 "certificate.json")


class SchemaError(RuntimeError):
    """Report directory has a missing or incompatible schema version."""


def check_schema(report_dir: Path) -> None:
    """Validate the schema version of the report directory's JSON files."""
    found = False
    for name in _REPORT_FILES:
        path = report_dir / name
        if not path.exists():
            continue
        found = True
        version = json.loads(path.read_text()).get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(
                f"{path} has schema version {version!r}; this plotkit "
                f"build reads version {SCHEMA_VERSION}")
    if not found:
        raise SchemaError(
            f"{report_dir} contains none of {', '.join(_REPORT_FILES)}; "
            "not a parakpz report directory")


def _read_series(report_dir: Path, name: str,
                 columns: tuple[str, ...]) -> dict[str, np.ndarray]:
    path = report_dir / name
    if not path.exists():
        raise FileNotFoundError(f"required series file {path} is missing")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        if header != columns:
            raise SchemaError(f"{path}: expected columns {columns}, "
                              f"found {header}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in columns}


def _no_data(ax) -> None:
    ax.text(0.5, 0.5, "no data", ha="center", va="center",
            transform=ax.transAxes, fontsize=18, color="gray")


def _new_axes(title: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    ax.set_title(title)
    return fig, ax


def _save(fig, out_path: Path) -> None:
    fig.tight_layout()
    fig.savefig(out_path, metadata={"Software": "plotkit"})
    plt.close(fig)


def fig_renorm_constants(report_dir: Path, out_path: Path) -> None:
    s = _read_series(report_dir, "constants.csv", ("n", "c_lr", "c_dbl"))
    fig, ax = _new_axes("Renormalization constants vs mollification level")
    if len(s["n"]) == 0:
        _no_data(ax)
    else:
        ax.loglog(s["n"], s["c_lr"], "o-", label="first constant")
        ax.loglog(s["n"], np.abs(s["c_dbl"]), "s--",
                  label="second constant (abs)")
        ax.set_xlabel("level n")
        ax.set_ylabel("constant")
        ax.legend()
    _save(fig, out_path)


def fig_cauchy_convergence(report_dir: Path, out_path: Path) -> None:
    s = _read_series(report_dir, "ydist.csv", ("n", "distance"))
    fig, ax = _new_axes("Enhanced-data distance between levels n and 2n")
    if len(s["n"]) == 0:
        _no_data(ax)
    else:
        ax.semilogx(s["n"], s["distance"], "o-")
        ax.set_xlabel("level n")
        ax.set_ylabel("distance")
    _save(fig, out_path)


def fig_cole_hopf_error(report_dir: Path, out_path: Path) -> None:
    s = _read_series(report_dir, "colehopf.csv", ("n", "rel_error"))
    fig, ax = _new_axes("Pipeline vs direct solve: relative gap per level")
    if len(s["n"]) == 0:
        _no_data(ax)
    else:
        ax.semilogy(s["n"], s["rel_error"], "o-")
        ax.set_xlabel("level n")
        ax.set_ylabel("relative sup-norm gap")
    _save(fig, out_path)


def fig_schauder_fit(report_dir: Path, out_path: Path) -> None:
    s = _read_series(report_dir, "schauder.csv", ("t", "sup_norm"))
    fig, ax = _new_axes("Heat-smoothing decay of a rough sample")
    if len(s["t"]) == 0:
        _no_data(ax)
    else:
        ax.loglog(s["t"], s["sup_norm"], "o", label="measured")
        meta_path = report_dir / "schauder_fit.json"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            slope = float(meta["exponent"])
            ref = s["sup_norm"][0] * (s["t"] / s["t"][0]) ** slope
            ax.loglog(s["t"], ref, "-",
                      label=f"fitted exponent {slope:.3f}")
        ax.set_xlabel("smoothing time t")
        ax.set_ylabel("sup norm")
        ax.legend()
    _save(fig, out_path)


def fig_polymer_marginals(report_dir: Path, out_path: Path) -> None:
    s = _read_series(report_dir, "paths.csv", ("path", "time", "position"))
    fig, ax = _new_axes("Polymer position marginals")
    if len(s["time"]) == 0:
        _no_data(ax)
    else:
        times = np.unique(s["time"])
        for t in times[times > 0]:
            ax.hist(s["position"][s["time"] == t], bins=40, density=True,
                    histtype="step", label=f"t = {t:g}")
        ax.set_xlabel("position")
        ax.set_ylabel("density")
        ax.legend()
    _save(fig, out_path)


def fig_variational_gaps(report_dir: Path, out_path: Path) -> None:
    s = _read_series(report_dir, "variational.csv",
                     ("control_scale", "value", "sigma"))
    fig, ax = _new_axes("Control values with Monte Carlo error bars")
    if len(s["control_scale"]) == 0:
        _no_data(ax)
    else:
        labels = [f"{v:g}x" for v in s["control_scale"]]
        xs = np.arange(len(labels))
        ax.bar(xs, s["value"], yerr=2 * s["sigma"], capsize=4)
        ax.set_xticks(xs, labels)
        ax.set_xlabel("control scale")
        ax.set_ylabel("value")
    _save(fig, out_path)


FIGURES = {
    "renorm-constants": fig_renorm_constants,
    "cauchy-convergence": fig_cauchy_convergence,
    "cole-hopf-error": fig_cole_hopf_error,
    "schauder-fit": fig_schauder_fit,
    "polymer-marginals": fig_polymer_marginals,
    "variational-gaps": fig_variational_gaps,
}


def render(report_dir, figure_name: str, out_path=None) -> Path:
    """Render one named figure from a report directory; returns the path."""
    report_dir = Path(report_dir)
    if figure_name not in FIGURES:
        raise KeyError(figure_name)
    if not report_dir.is_dir():
        raise FileNotFoundError(f"report directory {report_dir} not found")
    check_schema(report_dir)
    out_path = (Path(out_path) if out_path is not None
                else report_dir / f"{figure_name}.png")
    FIGURES[figure_name](report_dir, out_path)
    return out_path
