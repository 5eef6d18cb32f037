"""File formats: CSV ingestion with strict validation, fit artifacts, manifests.

Every emitted file embeds the run manifest for provenance: JSON artifacts
carry it as a top-level field, CSV artifacts as a leading ``# manifest:``
comment line. CSV readers in this package skip ``#`` comment lines.
Floating-point values are written with 17 significant digits, which
round-trips float64 exactly.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Dataset, FitSummary, GroupPartition
from .exceptions import InputError
from .preprocess import PreprocessTransform

TOOL_VERSION = "0.1.0"


def format_float(x):
    return format(float(x), ".17g")


@dataclass
class RunManifest:
    """Everything needed to reproduce one command invocation."""

    command: str
    inputs: dict = field(default_factory=dict)
    output: str = ""
    params: dict = field(default_factory=dict)
    seed: int = 0
    version: str = TOOL_VERSION

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def write_csv(path, header, rows, manifest=None):
    """Write rows (numbers are formatted at full precision)."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if manifest is not None:
            handle.write(f"# manifest: {manifest.to_json()}\n")
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    format_float(cell) if isinstance(cell, (float, np.floating)) else cell
                    for cell in row
                ]
            )


def read_csv_rows(path):
    """Header and data rows of a CSV file, skipping ``#`` comment lines."""
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}")
    with handle:
        lines = [line for line in handle if not line.startswith("#")]
    reader = csv.reader(lines)
    rows = [row for row in reader if row]
    if not rows:
        raise InputError(f"{path} contains no rows")
    return rows[0], rows[1:]


def ingest(data_path, groups_path):
    """Read a response+features CSV and its feature-to-group map.

    The data file needs a header whose first column is ``response``;
    every remaining column is a feature. The groups file is two columns,
    ``feature,group``, covering each feature exactly once. Missing or
    non-numeric cells are rejected with their coordinates; imputation is
    out of scope.
    """
    header, rows = read_csv_rows(data_path)
    if not header or header[0] != "response":
        raise InputError(
            f"{data_path}: first column must be named 'response', got {header[:1]}"
        )
    feature_names = header[1:]
    if not feature_names:
        raise InputError(f"{data_path}: no feature columns found")
    n = len(rows)
    values = np.empty((n, len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise InputError(
                f"{data_path}: row {i + 1} has {len(row)} cells, expected {len(header)}"
            )
        for j, cell in enumerate(row):
            name = "response" if j == 0 else feature_names[j - 1]
            if cell.strip() == "":
                raise InputError(
                    f"{data_path}: missing value at row {i + 1}, column {name}"
                )
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise InputError(
                    f"{data_path}: non-numeric value {cell!r} at row {i + 1}, "
                    f"column {name}"
                ) from None
    y = values[:, 0]
    X = values[:, 1:]

    gheader, grows = read_csv_rows(groups_path)
    if [h.strip() for h in gheader[:2]] != ["feature", "group"]:
        raise InputError(
            f"{groups_path}: header must be 'feature,group', got {gheader}"
        )
    mapping = {}
    for i, row in enumerate(grows):
        if len(row) < 2:
            raise InputError(f"{groups_path}: row {i + 1} needs feature and group")
        feature, group = row[0], row[1]
        if feature in mapping:
            raise InputError(f"{groups_path}: duplicate feature {feature!r}")
        mapping[feature] = group
    missing = [name for name in feature_names if name not in mapping]
    if missing:
        raise InputError(
            f"{groups_path}: no group for feature(s) {', '.join(missing[:5])}"
        )
    unknown = [name for name in mapping if name not in set(feature_names)]
    if unknown:
        raise InputError(
            f"{groups_path}: unknown feature(s) {', '.join(unknown[:5])}"
        )

    label_order = []
    for row in grows:
        if row[1] not in label_order:
            label_order.append(row[1])
    index = {label: k for k, label in enumerate(label_order)}
    assignment = np.array([index[mapping[name]] for name in feature_names], dtype=int)
    dataset = Dataset(X=X, y=y, feature_names=feature_names)
    groups = GroupPartition(assignment=assignment, labels=label_order)
    return dataset, groups


def write_dataset_csv(path, dataset, manifest=None):
    header = ["response"] + list(dataset.feature_names)
    rows = (
        [dataset.y[i]] + list(dataset.X[i]) for i in range(dataset.n_samples)
    )
    write_csv(path, header, rows, manifest=manifest)


def write_groups_csv(path, groups, feature_names, manifest=None):
    rows = [
        [feature_names[j], groups.labels[groups.assignment[j]]]
        for j in range(groups.n_features)
    ]
    write_csv(path, ["feature", "group"], rows, manifest=manifest)


def _array(values):
    return None if values is None else [float(v) for v in values]


def emit_fit(summary, state, manifest, outdir):
    """Write fit.json, elbo_trace.csv and coefficients.csv into ``outdir``."""
    outdir.mkdir(parents=True, exist_ok=True)
    transform = summary.transform
    payload = {
        "manifest": manifest.to_dict(),
        "model": summary.model,
        "factorization": summary.factorization,
        "dense": summary.dense,
        "converged": summary.converged,
        "n_iterations": summary.n_iterations,
        "final_elbo": summary.final_elbo,
        "intercept": summary.intercept,
        "tau_hat": summary.tau_hat,
        "feature_names": summary.feature_names,
        "group_labels": summary.groups.labels if summary.groups else None,
        "group_assignment": summary.groups.assignment.tolist() if summary.groups else None,
        "beta_hat": _array(summary.beta_hat),
        "beta_hat_original": _array(summary.beta_hat_original),
        "inclusion_prob": _array(summary.inclusion_prob),
        "gamma_hat": _array(summary.gamma_hat),
        "pi_hat": _array(summary.pi_hat),
        "transform": {
            "feature_means": _array(transform.feature_means),
            "feature_sds": _array(transform.feature_sds),
            "response_mean": transform.response_mean,
            "standardized": transform.standardized,
        },
    }
    with open(outdir / "fit.json", "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")

    trace = getattr(state, "elbo_trace", [])
    write_csv(
        outdir / "elbo_trace.csv",
        ["iteration", "elbo"],
        ([i + 1, value] for i, value in enumerate(trace)),
        manifest=manifest,
    )
    write_csv(
        outdir / "coefficients.csv",
        ["feature", "group", "beta_hat", "inclusion_prob"],
        (
            [
                summary.feature_names[j],
                summary.groups.labels[summary.groups.assignment[j]],
                float(summary.beta_hat[j]),
                float(summary.inclusion_prob[j]),
            ]
            for j in range(len(summary.beta_hat))
        ),
        manifest=manifest,
    )


def load_fit(path):
    """Rebuild the summary a ``predict`` run needs from fit.json."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}")
    except json.JSONDecodeError as err:
        raise InputError(f"{path} is not valid JSON: {err}")
    transform = payload["transform"]
    groups = None
    if payload.get("group_assignment") is not None:
        groups = GroupPartition(
            assignment=np.array(payload["group_assignment"], dtype=int),
            labels=payload.get("group_labels"),
        )
    return FitSummary(
        beta_hat=np.array(payload["beta_hat"]),
        inclusion_prob=np.array(payload["inclusion_prob"]),
        gamma_hat=np.array(payload["gamma_hat"]),
        pi_hat=None if payload["pi_hat"] is None else np.array(payload["pi_hat"]),
        tau_hat=payload["tau_hat"],
        intercept=payload["intercept"],
        beta_hat_original=np.array(payload["beta_hat_original"]),
        n_iterations=payload["n_iterations"],
        converged=payload["converged"],
        final_elbo=payload["final_elbo"],
        model=payload["model"],
        factorization=payload["factorization"],
        dense=payload["dense"],
        transform=PreprocessTransform(
            feature_means=np.array(transform["feature_means"]),
            feature_sds=np.array(transform["feature_sds"]),
            response_mean=transform["response_mean"],
            standardized=transform["standardized"],
        ),
        groups=groups,
        feature_names=payload["feature_names"],
    )
