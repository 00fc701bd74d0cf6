"""Record files and study reports: delimited text plus rendered figures.

Per run: one evolution CSV (step, target, point, per-limit-state estimates),
a meta JSON and the final serialized models.  Per study: a summary table in
text and CSV form, percentile-band evolution series, box-plot statistics,
and PNG figures rendered from the same data.
"""

from __future__ import annotations

import csv
import json
import os

from .active import RunRecord
from .pck import model_to_dict

__all__ = [
    "write_run_files", "load_run_summary", "write_study_report",
    "render_table", "file_safe",
]


def file_safe(label: str) -> str:
    return label.replace(":", "").replace("-guided", "").replace("-", "")


# -- per-run files -----------------------------------------------------------

def write_run_files(out_dir, run_id: str, rep: int, record: RunRecord, stats: dict) -> None:
    """Persist one replication: evolution CSV, meta JSON, final models."""
    lsf = record.lsf_names
    m = len(lsf)
    dims = len(record.steps[0].point) if record.steps and record.steps[0].point else None
    if dims is None:
        for s in record.steps:
            if s.point is not None:
                dims = len(s.point)
                break
    dims = dims or 0

    path = os.path.join(out_dir, "records", f"{run_id}.csv")
    header = (["step", "design_size", "target", "u_value"]
              + [f"x{i + 1}" for i in range(dims)]
              + [f"p_{n}" for n in lsf] + [f"beta_{n}" for n in lsf]
              + [f"se_{n}" for n in lsf] + ["wall_time"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in record.steps:
            point = list(s.point) if s.point is not None else [""] * dims
            writer.writerow(
                [s.step, s.design_size,
                 s.target if s.target is not None else "",
                 repr(s.u_value) if s.u_value is not None else ""]
                + [repr(v) for v in point]
                + [repr(v) for v in s.p_hat] + [repr(v) for v in s.beta_hat]
                + [repr(v) for v in s.std_err] + [repr(s.wall_time)]
            )

    meta = {
        "run_id": run_id, "strategy": record.strategy, "metric": record.metric,
        "rep": rep, "seed": record.seed, "budget": record.budget,
        "n_init": record.n_init, "pool_size": record.pool_size,
        "lsf_names": list(lsf), "flag": record.flag,
        "final_design_size": record.steps[-1].design_size if record.steps else 0,
        **stats,
    }
    with open(os.path.join(out_dir, "records", f"{run_id}.meta.json"), "w",
              encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)

    models = {name: model_to_dict(model)
              for name, model in zip(lsf, record.models)}
    with open(os.path.join(out_dir, "records", f"{run_id}.models.json"), "w",
              encoding="utf-8") as fh:
        json.dump(models, fh)


def load_run_summary(out_dir, run_id: str) -> dict:
    """Summary of one recorded run, read back from its files."""
    with open(os.path.join(out_dir, "records", f"{run_id}.meta.json"),
              encoding="utf-8") as fh:
        meta = json.load(fh)
    lsf = meta["lsf_names"]
    p_evo = {n: [] for n in lsf}
    beta_evo = {n: [] for n in lsf}
    targets = []
    with open(os.path.join(out_dir, "records", f"{run_id}.csv"),
              encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for n in lsf:
            p_evo[n].append(float(row[f"p_{n}"]))
            beta_evo[n].append(float(row[f"beta_{n}"]))
        if row["target"]:
            targets.append(int(row["target"]))
    last = rows[-1]
    return {
        "run_id": run_id, "strategy": meta["strategy"], "metric": meta["metric"],
        "rep": meta["rep"], "seed": meta["seed"], "flag": meta["flag"],
        "adapter_calls": meta.get("adapter_calls", 0),
        "adapter_cache_hits": meta.get("adapter_cache_hits", 0),
        "final_design_size": int(last["design_size"]),
        "targets": targets,
        "final_p": {n: float(last[f"p_{n}"]) for n in lsf},
        "final_beta": {n: float(last[f"beta_{n}"]) for n in lsf},
        "final_se": {n: float(last[f"se_{n}"]) for n in lsf},
        "p_evolution": p_evo,
        "beta_evolution": beta_evo,
    }


# -- study-level files -------------------------------------------------------

def _fmt_ms(cell: dict | None) -> str:
    if cell is None:
        return "n/a"
    if cell["std"] is None:
        return f"{cell['mean']:.3e}"
    return f"{cell['mean']:.3e} ({cell['std']:.3e})"


def render_table(report) -> str:
    """Plain-text summary table; the best mean per error column is starred."""
    lsf = report.lsf_names
    err_cols = [f"eps_{n}" for n in lsf] + ["eps_beta"]
    best: dict[str, float] = {}
    for col in err_cols:
        means = [row[col]["mean"] for row in report.rows if col in row]
        if means:
            best[col] = min(means)
    header = ["strategy", "metric"] + [f"eps[{n}] mean(std)" for n in lsf] \
        + ["eps[beta] mean(std)"]
    lines = [header]
    for row in report.rows:
        cells = [row["strategy"], row["metric"]]
        for col in err_cols:
            if col not in row:
                cells.append("n/a")
                continue
            text = _fmt_ms(row[col])
            if row[col]["mean"] == best.get(col):
                text = "*" + text
            cells.append(text)
        lines.append(cells)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    out = []
    for i, cells in enumerate(lines):
        out.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def write_study_report(out_dir, report, figures: bool = True) -> None:
    """Emit the summary table, band series, box stats and figures."""
    lsf = report.lsf_names

    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_table(report))

    with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        cols = ["strategy", "metric", "n_runs"]
        for n in list(lsf) + ["beta"]:
            cols += [f"mean_eps_{n}", f"std_eps_{n}"]
        writer.writerow(cols)
        for row in report.rows:
            out = [row["strategy"], row["metric"], row["n_runs"]]
            for n in list(lsf) + ["beta"]:
                key = f"eps_{n}" if n != "beta" else "eps_beta"
                cell = row.get(key)
                if cell is None:
                    out += ["", ""]
                else:
                    out += [repr(cell["mean"]),
                            repr(cell["std"]) if cell["std"] is not None else ""]
            writer.writerow(out)

    for (strategy, metric), series in report.bands.items():
        fname = f"evolution_bands_{file_safe(strategy)}_{file_safe(metric)}.csv"
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["design_size"]
                            + [f"{q}_{n}" for n in lsf for q in ("p30", "p60", "mean")])
            if series[lsf[0]]:
                for t in range(len(series[lsf[0]])):
                    row = [series[lsf[0]][t]["design_size"]]
                    for n in lsf:
                        cell = series[n][t]
                        row += [repr(cell["p30"]), repr(cell["p60"]), repr(cell["mean"])]
                    writer.writerow(row)

    with open(os.path.join(out_dir, "boxplot_stats.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "metric", "w025", "q25", "median", "q75",
                         "w975", "mean"])
        for row in report.rows:
            box = row.get("box")
            if box is None:
                continue
            writer.writerow([row["strategy"], row["metric"]]
                            + [repr(box[k]) for k in
                               ("w025", "q25", "median", "q75", "w975", "mean")])

    if figures:
        render_figures(out_dir, report)


# -- figures ------------------------------------------------------------------

def render_figures(out_dir, report) -> None:
    """Render evolution-band and box-plot figures next to the CSV output."""
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    lsf = report.lsf_names
    metrics = list(dict.fromkeys(m for (_, m) in report.bands))
    strategies = list(dict.fromkeys(s for (s, _) in report.bands))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]

    for metric in metrics:
        fig, axes = plt.subplots(len(lsf), 1, figsize=(7.0, 3.0 * len(lsf)),
                                 sharex=True, squeeze=False)
        for i, name in enumerate(lsf):
            ax = axes[i][0]
            for k, strategy in enumerate(strategies):
                series = report.bands.get((strategy, metric), {}).get(name, [])
                if not series:
                    continue
                sizes = [c["design_size"] for c in series]
                ax.plot(sizes, [c["mean"] for c in series],
                        color=colors[k % len(colors)], label=strategy)
                ax.fill_between(sizes, [c["p30"] for c in series],
                                [c["p60"] for c in series],
                                color=colors[k % len(colors)], alpha=0.25, lw=0)
            ax.set_ylabel(f"p[{name} <= 0]")
            ax.grid(alpha=0.3)
            if i == 0:
                ax.legend(loc="best", fontsize=8)
                ax.set_title(f"probability evolution, metric {metric} "
                             f"(band: 30-60% percentiles)")
        axes[-1][0].set_xlabel("training points")
        fig.tight_layout()
        fig.savefig(os.path.join(fig_dir, f"evolution_{file_safe(metric)}.png"),
                    dpi=150)
        plt.close(fig)

    rows_with_box = [row for row in report.rows if row.get("box")]
    if rows_with_box:
        fig, axes = plt.subplots(1, len(metrics), figsize=(4.5 * len(metrics), 4.0),
                                 squeeze=False)
        for k, metric in enumerate(metrics):
            ax = axes[0][k]
            stats, labels = [], []
            for row in rows_with_box:
                if row["metric"] != metric:
                    continue
                box = row["box"]
                stats.append({
                    "whislo": box["w025"], "q1": box["q25"], "med": box["median"],
                    "q3": box["q75"], "whishi": box["w975"], "mean": box["mean"],
                    "label": row["strategy"],
                })
                labels.append(row["strategy"])
            if not stats:
                continue
            ax.bxp(stats, showmeans=True, meanline=True, showfliers=False)
            ax.set_title(f"metric {metric} (whiskers: 2.5-97.5%)")
            ax.set_ylabel("combined relative error")
            ax.grid(alpha=0.3, axis="y")
            ax.tick_params(axis="x", rotation=20)
        fig.tight_layout()
        fig.savefig(os.path.join(fig_dir, "error_boxplot.png"), dpi=150)
        plt.close(fig)
