"""Metric aggregation and the paired t-test."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.stats import t as t_dist

from .core import ValidationError
from .dosimetry import MetricsRow

REPORT_COLUMNS = MetricsRow.CSV_HEADER.split(",")


def paired_t_test(a, b):
    """Two-sided paired t statistic and p-value (df = n - 1).

    All-zero differences are degenerate; zero-variance non-zero differences
    report t = +-inf with p = 0.0 (printed as < 1e-12 by the CLI).
    """
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValidationError("paired series must be equal-length 1D with n >= 2")
    d = a - b
    if np.all(d == 0):
        raise ValidationError("all paired differences are zero; t undefined")
    n = d.size
    sd = d.std(ddof=1)
    if sd == 0.0:
        return math.copysign(math.inf, d.mean()), 0.0
    t = d.mean() / (sd / math.sqrt(n))
    p = 2.0 * float(t_dist.sf(abs(t), df=n - 1))
    return float(t), p


def read_metrics_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != MetricsRow.CSV_HEADER:
        raise ValidationError(f"{path}: missing metrics header")
    return [MetricsRow.from_csv_row(ln) for ln in lines[1:] if ln.strip()]


def write_metrics_csv(path, rows) -> Path:
    path = Path(path)
    lines = [MetricsRow.CSV_HEADER] + [r.csv_row() for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _column_values(rows, col):
    attr = {
        "PTV_V100": "ptv_v100", "PTV_V150": "ptv_v150",
        "CTV_V100": "ctv_v100", "CTV_V150": "ctv_v150",
        "URE_V150": "ure_v150", "REC_V50": "rec_v50",
        "N_needles": "needles", "N_seeds": "seeds",
        "plan_time_s": "plan_time",
    }[col]
    return np.array([getattr(r, attr) for r in rows], np.float64)


def summarize(rows) -> dict:
    """Per-column (mean, sample std); std is 0 for a single row."""
    out = {}
    for col in REPORT_COLUMNS:
        vals = _column_values(rows, col)
        std = 0.0 if vals.size < 2 else float(vals.std(ddof=1))
        out[col] = (float(vals.mean()), std)
    return out


def format_report(labelled) -> tuple:
    """labelled: [(technique_label, rows)]; returns (csv_text, aligned_text)."""
    if not labelled:
        raise ValidationError("report needs at least one metrics file")
    header = ["technique"]
    for col in REPORT_COLUMNS:
        header += [f"{col}_mean", f"{col}_std"]
    csv_lines = [",".join(header)]
    for label, rows in labelled:
        if not rows:
            raise ValidationError(f"metrics set {label!r} is empty")
        summary = summarize(rows)
        cells = [label]
        for col in REPORT_COLUMNS:
            m, s = summary[col]
            cells += [f"{m:.6g}", f"{s:.6g}"]
        csv_lines.append(",".join(cells))

    width = max(len(lbl) for lbl, _ in labelled)
    text_lines = [" " * (width + 2) + "  ".join(f"{c:>16}" for c in REPORT_COLUMNS)]
    for label, rows in labelled:
        summary = summarize(rows)
        cells = []
        for col in REPORT_COLUMNS:
            m, s = summary[col]
            cells.append(f"{m:8.2f} +- {s:5.2f}")
        text_lines.append(f"{label:<{width + 2}}" + "  ".join(f"{c:>16}" for c in cells))
    return "\n".join(csv_lines) + "\n", "\n".join(text_lines) + "\n"
