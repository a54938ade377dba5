"""Inference: encode a case, run the generator on both mirrored halves, and
write a full-width probability plan the engine's plan-file mode consumes.
The restored center column stays empty; downstream fine-tuning can fill it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .encoding import (
    encode_case,
    merge_halves,
    plan_from_torch_layout,
    split_halves,
    to_torch_layout,
)
from .formats import read_case, read_plan, write_prob_plan
from .training import load_generator


def predict_case(checkpoint_path, case_path, needle_path, out_path) -> Path:
    gen, payload = load_generator(checkpoint_path)
    case = read_case(case_path)
    needles = read_plan(needle_path)
    tensor = encode_case(case, needles)
    dummy_target = np.zeros((len(needles.eff_rows), needles.cols, needles.planes))
    (lt, _), (rt, _) = split_halves(tensor, dummy_target)

    with torch.no_grad():
        outs = []
        for half in (lt, rt):
            x = torch.from_numpy(to_torch_layout(half).astype(np.float32))
            outs.append(plan_from_torch_layout(gen(x.unsqueeze(0)).squeeze(0).numpy()))
    merged = merge_halves(outs[0], outs[1])
    merged = np.clip(merged.astype(np.float64), 0.0, 1.0)
    return write_prob_plan(out_path, merged, needles.needles,
                           case_id=case.case_id, rows=needles.rows,
                           cols=needles.cols, planes=needles.planes,
                           spacing=(needles.in_plane_spacing, needles.plane_spacing),
                           excluded_rows=needles.excluded_rows)
