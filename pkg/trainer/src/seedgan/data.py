"""Dataset assembly from an engine manifest: encoded half-samples."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import encode_case, plan_to_torch_layout, split_halves, to_torch_layout
from .formats import read_case, read_manifest, read_plan


@dataclass
class Sample:
    x: np.ndarray       # (3, planes, 64, 32) float32
    y: np.ndarray       # (planes, rows, half_cols) float32
    case_id: str
    side: str           # "left" | "right"


@dataclass
class CaseRecord:
    case_id: str
    case_path: Path
    needle_path: Path
    plan_path: Path


def manifest_records(manifest_path, tag: str = "") -> dict:
    manifest_path = Path(manifest_path)
    doc = read_manifest(manifest_path)
    base = manifest_path.parent
    out = {"train": [], "val": [], "test": []}
    for entry in doc["cases"]:
        out[entry["split"]].append(CaseRecord(
            case_id=tag + entry["case_id"],
            case_path=base / entry["case_file"],
            needle_path=base / entry["needle_file"],
            plan_path=base / entry["plan_file"],
        ))
    return out


def combined_records(manifest_paths) -> dict:
    """Concatenate several datasets (e.g. plan variants of one anatomy set);
    case ids get a per-manifest prefix so samples stay distinct."""
    paths = list(manifest_paths)
    out = {"train": [], "val": [], "test": []}
    for j, p in enumerate(paths):
        tag = f"v{j}:" if len(paths) > 1 else ""
        recs = manifest_records(p, tag=tag)
        for split in out:
            out[split].extend(recs[split])
    return out


def load_samples(records) -> list:
    """Two mirrored half-samples per case (the split augmentation)."""
    samples = []
    for rec in records:
        case = read_case(rec.case_path)
        needles = read_plan(rec.needle_path)
        ref = read_plan(rec.plan_path)
        tensor = encode_case(case, needles)
        target = ref.seed_matrix().astype(np.float64)
        (lt, lp), (rt, rp) = split_halves(tensor, target)
        for side, (t, p) in (("left", (lt, lp)), ("right", (rt, rp))):
            samples.append(Sample(
                x=to_torch_layout(t).astype(np.float32),
                y=plan_to_torch_layout(p).astype(np.float32),
                case_id=rec.case_id,
                side=side,
            ))
    return samples
