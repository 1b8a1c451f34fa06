"""Result serialization (CSV + JSONL) and figure rendering.

CSV files are the primary deliverable and must be byte-identical across
reruns of the same config, so they never contain wall times or other
non-deterministic values; those live in the JSONL mirror. Figures are
rendered next to the delimited output unless suppressed.
"""

import json
from dataclasses import dataclass, field

from .util import atomic_write_text, to_jsonable


def fmt(value) -> str:
    """Deterministic CSV cell formatting; floats use 17 significant digits."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells for {len(header)} columns")
        lines.append(",".join(fmt(cell) for cell in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class ExperimentRecord:
    """One JSONL line: everything needed to trace a result back to its run."""

    config_hash: str
    command: str
    seed: int
    metrics: dict
    wall_time_s: float
    artifacts: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        row = {
            "config_hash": self.config_hash,
            "command": self.command,
            "seed": self.seed,
            "metrics": self.metrics,
            "wall_time_s": self.wall_time_s,
            "artifacts": list(self.artifacts),
        }
        row.update(self.extra)
        return row


def write_jsonl(path, records) -> None:
    lines = []
    for rec in records:
        row = rec.as_dict() if isinstance(rec, ExperimentRecord) else rec
        lines.append(json.dumps(to_jsonable(row), sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Figures. matplotlib is imported lazily so --no-plots runs never touch it.

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    import matplotlib.pyplot as plt

    plt.close(fig)


def render_train_curves(per_seed_records, path) -> None:
    """Val MAE and train loss per epoch, one line per seed."""
    plt = _pyplot()
    fig, (ax_loss, ax_mae) = plt.subplots(1, 2, figsize=(9, 3.5))
    for seed, records in sorted(per_seed_records.items()):
        epochs = [r.epoch for r in records]
        ax_loss.plot(epochs, [r.train_loss for r in records], label=f"seed {seed}")
        ax_mae.plot(epochs, [r.val.mae for r in records], label=f"seed {seed}")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss")
    ax_mae.set_xlabel("epoch")
    ax_mae.set_ylabel("val MAE")
    ax_mae.legend(fontsize=7)
    _save(fig, path)


def render_ablation(variants, maes, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(variants)), maes, color="#4878a8")
    ax.set_xticks(range(len(variants)))
    ax.set_xticklabels(variants, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("test MAE (mean over seeds)")
    _save(fig, path)


def render_noise_curves(curves, metric, ylabel, path) -> None:
    """curves: {label: {p: MetricReport}} averaged over kinds and runs."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for label, by_p in sorted(curves.items()):
        ps = sorted(by_p)
        ax.plot(ps, [getattr(by_p[p], metric) for p in ps], marker="o", label=label)
    ax.set_xlabel("corruption probability p")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    _save(fig, path)


def render_probe_bars(probe_rows, path) -> None:
    """probe_rows: list of (label, mae) for per-modality and fusion probes."""
    plt = _pyplot()
    labels = [r[0] for r in probe_rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.bar(range(len(labels)), [r[1] for r in probe_rows], color="#a85448")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("probe test MAE")
    _save(fig, path)


def render_limited(fractions, by_algorithm, path) -> None:
    """by_algorithm: {algorithm: {fraction: (mean, std) of test MAE}}."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for algorithm, cells in sorted(by_algorithm.items()):
        means = [cells[f][0] for f in fractions]
        stds = [cells[f][1] for f in fractions]
        ax.errorbar(fractions, means, yerr=stds, marker="o", capsize=3,
                    label=algorithm)
    ax.set_xlabel("train fraction")
    ax.set_ylabel("test MAE (mean over seeds)")
    ax.legend(fontsize=8)
    _save(fig, path)


def render_nsweep(n_grid, means, stds, baseline_mean, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.errorbar(n_grid, means, yerr=stds, marker="o", capsize=3, label="powmix")
    ax.axhline(baseline_mean, color="gray", linestyle="--", label="none")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("mixed examples per batch")
    ax.set_ylabel("test MAE (mean over seeds)")
    ax.legend(fontsize=8)
    _save(fig, path)
