"""Run outputs: streaming metrics, CSV tables, and figure rendering.

Every run directory gets a line-delimited metrics stream (one JSON record per
round, written as rounds complete) and a summary CSV with the same fields.
Files land via temp-file-plus-rename so a crashed run never leaves a corrupt
report; whatever rounds finished are still readable.

Figures are rendered separately, by the report command, from the delimited
files. Keeping rendering off the run path means headless runs stay cheap and
any directory of results can be re-plotted later.
"""

import csv
import json
import os

import numpy as np

from .nn import ModelSpec, save_checkpoint

METRICS_NAME = "metrics.jsonl"
SUMMARY_NAME = "summary.csv"

_NAT_COLOR = "#1f77b4"
_ADV_COLOR = "#d62728"


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_yaml(path: str, tree: dict) -> None:
    import yaml

    _atomic_write_text(path, yaml.safe_dump(tree, sort_keys=False))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path: str, rows: list[dict], columns: list[str] | None = None) -> None:
    """Atomic CSV with one row per dict; missing values become empty cells."""
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in columns])
    os.replace(tmp, path)


def read_metrics(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


class RunWriter:
    """Streams per-round records for one run and finalizes them atomically."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self._records: list[dict] = []
        self._tmp_path = os.path.join(out_dir, f"{METRICS_NAME}.tmp")
        self._stream = open(self._tmp_path, "w")
        self._finalized = False

    def write_config(self, tree: dict) -> None:
        write_yaml(os.path.join(self.out_dir, "config.yaml"), tree)

    def write_round(self, record: dict) -> None:
        self._records.append(record)
        self._stream.write(json.dumps(record) + "\n")
        self._stream.flush()

    def save_model(self, name: str, params: np.ndarray, spec: ModelSpec) -> None:
        save_checkpoint(os.path.join(self.out_dir, name), params, spec)

    def finalize(self) -> None:
        """Promote the stream to its final name and write the summary CSV."""
        if self._finalized:
            return
        self._finalized = True
        self._stream.close()
        os.replace(self._tmp_path, os.path.join(self.out_dir, METRICS_NAME))
        write_table(os.path.join(self.out_dir, SUMMARY_NAME), self._records)


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _series(records: list[dict], key: str):
    """(x, y) arrays over the records where `key` is present and non-null."""
    pairs = [(r["round"], r[key]) for r in records if r.get(key) is not None]
    if not pairs:
        return np.array([]), np.array([])
    xs, ys = zip(*pairs)
    return np.asarray(xs), np.asarray(ys)


def render_run_figures(run_dir: str, out_dir: str) -> list[str]:
    """Accuracy, loss, schedule and drift curves for one run directory."""
    records = read_metrics(os.path.join(run_dir, METRICS_NAME))
    if not records:
        raise ValueError(f"{run_dir}: metrics stream is empty")
    plt = _plt()
    os.makedirs(out_dir, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for key, label, color in (("nat_acc", "natural", _NAT_COLOR), ("adv_acc", "adversarial", _ADV_COLOR)):
        xs, ys = _series(records, key)
        if xs.size:
            ax.plot(xs, ys, label=label, color=color)
    ax.set_xlabel("round")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = os.path.join(out_dir, "accuracy_curves.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, (ax_loss, ax_e) = plt.subplots(1, 2, figsize=(9, 4))
    xs, ys = _series(records, "mean_loss")
    ax_loss.plot(xs, ys, color="#2ca02c")
    ax_loss.set_xlabel("round")
    ax_loss.set_ylabel("mean training loss")
    ax_loss.grid(alpha=0.3)
    xs, ys = _series(records, "e_t")
    ax_e.step(xs, ys, where="post", color="#9467bd")
    ax_e.set_xlabel("round")
    ax_e.set_ylabel("local epochs E_t")
    ax_e.grid(alpha=0.3)
    fig.tight_layout()
    path = os.path.join(out_dir, "training_curves.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    svcca_keys = sorted(
        {key for r in records for key in r if key.startswith("svcca_l")},
        key=lambda k: int(k.removeprefix("svcca_l")),
    )
    if svcca_keys:
        fig, ax = plt.subplots(figsize=(6, 4))
        for key in svcca_keys:
            xs, ys = _series(records, key)
            if xs.size:
                ax.plot(xs, ys, marker="o", label=f"layer {key.removeprefix('svcca_l')}")
        ax.set_xlabel("round")
        ax.set_ylabel("mean pairwise similarity")
        ax.set_ylim(0.0, 1.05)
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = os.path.join(out_dir, "drift_curves.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def _read_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def _maybe_float(text: str):
    if text in ("", None):
        return None
    return float(text)


def render_interpolation_figure(csv_path: str, out_dir: str) -> str:
    """Loss along the mixing line between two models."""
    rows = _read_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path}: no rows")
    plt = _plt()
    os.makedirs(out_dir, exist_ok=True)
    w = np.array([float(r["w"]) for r in rows])
    nat = np.array([float(r["nat_loss"]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(w, nat, label="natural loss", color=_NAT_COLOR)
    adv = [_maybe_float(r.get("adv_loss")) for r in rows]
    if any(v is not None for v in adv):
        ax.plot(w, adv, label="adversarial loss", color=_ADV_COLOR)
    ax.axvline(0.0, color="gray", lw=0.8, ls=":")
    ax.axvline(1.0, color="gray", lw=0.8, ls=":")
    ax.set_xlabel("mixing weight w")
    ax.set_ylabel("loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = os.path.join(out_dir, "interpolation.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_comparison_figure(csv_path: str, out_dir: str) -> str:
    """Final accuracies per swept value, as grouped bars."""
    rows = _read_csv(csv_path)
    rows = [r for r in rows if not r.get("error")]
    if not rows:
        raise ValueError(f"{csv_path}: no successful runs to plot")
    plt = _plt()
    os.makedirs(out_dir, exist_ok=True)
    labels = [r["value"] for r in rows]
    nat = [_maybe_float(r.get("nat_acc")) or 0.0 for r in rows]
    adv = [_maybe_float(r.get("adv_acc")) or 0.0 for r in rows]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, nat, width=0.4, label="natural", color=_NAT_COLOR)
    ax.bar(x + 0.2, adv, width=0.4, label="adversarial", color=_ADV_COLOR)
    ax.set_xticks(x, labels)
    ax.set_xlabel(rows[0].get("axis", "value"))
    ax.set_ylabel("final test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    path = os.path.join(out_dir, "comparison.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_svcca_figure(csv_path: str, out_dir: str) -> str:
    """Per-layer similarity between two checkpoints."""
    rows = _read_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path}: no rows")
    plt = _plt()
    os.makedirs(out_dir, exist_ok=True)
    layers = [int(r["layer"]) for r in rows]
    scores = [float(r["score"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(layers, scores, color="#9467bd")
    ax.set_xticks(layers)
    ax.set_xlabel("hidden layer")
    ax.set_ylabel("similarity score")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    path = os.path.join(out_dir, "svcca_layers.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
