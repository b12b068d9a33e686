"""Soft-label elicitation toolkit: label construction, aggregation, metrics,
annotator simulation and the command-line front end."""

import json as _json

from ._softlabel import (
    LabelError,
    SchemaError,
    aggregate_mean,
    calibration_rmse,
    cifar10_classes,
    cross_entropy,
    entropy,
    estimate_time,
    label_distance,
    multi_aggregate,
    run_cli,
)
from . import _softlabel

__all__ = [
    "LabelError",
    "SchemaError",
    "aggregate_mean",
    "apply_qc",
    "calibration_rmse",
    "cifar10_classes",
    "compare_label_sets",
    "construct_label",
    "cross_entropy",
    "entropy",
    "estimate_time",
    "label_distance",
    "multi_aggregate",
    "parse_annotations",
    "run_cli",
    "simulate_sweep",
]


def construct_label(record, variety, gamma=0.1, classes=None):
    """Label from one response dict (class names as strings)."""
    return _softlabel.construct_label(_json.dumps(record), variety, gamma, classes)


def parse_annotations(text, classes=None):
    """Returns (sessions, errors) from annotation JSONL text."""
    out = _json.loads(_softlabel.parse_annotations_json(text, classes))
    return out["submissions"], out["errors"]


def apply_qc(jsonl, references, threshold=0.75, classes=None):
    """Per-session verdicts; `references` maps image id to class name."""
    return _json.loads(_softlabel.apply_qc_json(jsonl, references, threshold, classes))


def compare_label_sets(ours, theirs):
    return _json.loads(_softlabel.compare_label_sets_json(ours, theirs))


def simulate_sweep(M_values, aggregations=("multi", "ours"), **kwargs):
    """Efficiency sweep as a list of row dicts."""
    csv = _softlabel.simulate_sweep_csv(list(M_values), list(aggregations), **kwargs)
    lines = csv.strip().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = dict(zip(header, line.split(",")))
        rows.append({
            "M": int(cells["M"]),
            "aggregation": cells["aggregation"],
            "mean_distance": float(cells["mean_distance"]),
            "ci_low": float(cells["ci_low"]) if cells["ci_low"] else None,
            "ci_high": float(cells["ci_high"]) if cells["ci_high"] else None,
        })
    return rows
