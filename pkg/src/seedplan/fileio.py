"""On-disk formats.

Volume container (.spvol): ASCII header then a raw little-endian payload,
row-major with z slowest and x fastest::

    SPVOL1
    dims <nz> <ny> <nx>
    spacing_mm <dz> <dy> <dx>
    dtype u8|f32le
    payload_bytes <n>
    end_header
    <payload>

Plan, case, manifest, source-model, and golden-fixture documents are JSON
text files carrying a magic field. Plan files may hold a needle plan, a
binary seed plan, a probability plan, or any combination; seeds and needles
are stored with physical template row indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    AnatomyCase,
    NeedlePlan,
    ProbPlan,
    SeedPlan,
    TemplateGrid,
    ValidationError,
)

_DTYPES = {"u8": np.dtype("u1"), "f32le": np.dtype("<f4")}


def write_volume(path, values: np.ndarray, spacing, dtype: str = None) -> Path:
    path = Path(path)
    arr = np.asarray(values)
    if dtype is None:
        dtype = "u8" if arr.dtype == np.uint8 else "f32le"
    if dtype not in _DTYPES:
        raise ValidationError(f"unsupported volume dtype {dtype!r}")
    payload = np.ascontiguousarray(arr.astype(_DTYPES[dtype])).tobytes()
    nz, ny, nx = arr.shape
    dz, dy, dx = (float(s) for s in spacing)
    header = (
        "SPVOL1\n"
        f"dims {nz} {ny} {nx}\n"
        f"spacing_mm {dz!r} {dy!r} {dx!r}\n"
        f"dtype {dtype}\n"
        f"payload_bytes {len(payload)}\n"
        "end_header\n"
    )
    path.write_bytes(header.encode("ascii") + payload)
    return path


def read_volume(path):
    """Returns (values, spacing). Raises ValidationError on malformed files."""
    blob = Path(path).read_bytes()
    marker = b"end_header\n"
    cut = blob.find(marker)
    if cut < 0:
        raise ValidationError(f"{path}: missing end_header")
    lines = blob[:cut].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0] != "SPVOL1":
        raise ValidationError(f"{path}: bad magic, expected SPVOL1")
    fields = {}
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        fields[key] = rest
    try:
        dims = tuple(int(v) for v in fields["dims"].split())
        spacing = tuple(float(v) for v in fields["spacing_mm"].split())
        dtype = fields["dtype"]
        payload_bytes = int(fields["payload_bytes"])
    except (KeyError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed header ({exc})") from None
    if len(dims) != 3 or dtype not in _DTYPES:
        raise ValidationError(f"{path}: malformed header")
    payload = blob[cut + len(marker):]
    if len(payload) != payload_bytes:
        raise ValidationError(
            f"{path}: payload is {len(payload)} bytes, header says {payload_bytes}"
        )
    want = int(np.prod(dims)) * _DTYPES[dtype].itemsize
    if payload_bytes != want:
        raise ValidationError(
            f"{path}: payload_bytes {payload_bytes} != dims product {want}"
        )
    values = np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(dims)
    return values.copy(), spacing


_CASE_VOLUMES = ("ptv", "ctv", "urethra", "rectum")


def write_case(case: AnatomyCase, directory, stem: str = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or case.case_id or "case"
    names = {}
    for key in _CASE_VOLUMES:
        fname = f"{stem}_{key}.spvol"
        write_volume(directory / fname, getattr(case, f"{key}_mask"), case.spacing, "u8")
        names[key] = fname
    doc = {
        "magic": "SPCASE1",
        "case_id": case.case_id,
        "dims": list(case.dims),
        "spacing_mm": list(case.spacing),
        "template_origin_mm": list(case.template_origin),
        "volumes": names,
    }
    path = directory / f"{stem}.case.json"
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_case(path) -> AnatomyCase:
    path = Path(path)
    doc = _read_json(path, "SPCASE1")
    masks = {}
    spacing = None
    for key in _CASE_VOLUMES:
        try:
            fname = doc["volumes"][key]
        except KeyError:
            raise ValidationError(f"{path}: missing volume entry {key!r}") from None
        values, vsp = read_volume(path.parent / fname)
        if list(values.shape) != list(doc["dims"]):
            raise ValidationError(f"{path}: {key} volume dims mismatch")
        masks[key] = values
        spacing = vsp
    if list(spacing) != [float(s) for s in doc["spacing_mm"]]:
        raise ValidationError(f"{path}: volume spacing disagrees with case header")
    return AnatomyCase(
        ptv_mask=masks["ptv"],
        ctv_mask=masks["ctv"],
        urethra_mask=masks["urethra"],
        rectum_mask=masks["rectum"],
        spacing=tuple(doc["spacing_mm"]),
        template_origin=tuple(doc["template_origin_mm"]),
        case_id=doc.get("case_id", ""),
    )


@dataclass
class PlanFile:
    grid: TemplateGrid
    needles: NeedlePlan = None
    seeds: SeedPlan = None
    prob: ProbPlan = None
    case_id: str = ""


def write_plan(path, seeds: SeedPlan = None, needles: NeedlePlan = None,
               prob: ProbPlan = None, case_id: str = "") -> Path:
    grid = next(p.grid for p in (seeds, needles, prob) if p is not None)
    for p in (seeds, needles, prob):
        if p is not None and p.grid != grid:
            raise ValidationError("plan components use different grids")
    doc = {
        "magic": "SPPLAN1",
        "grid": {
            "rows": grid.rows,
            "cols": grid.cols,
            "planes": grid.num_planes,
            "spacing_mm": [grid.in_plane_spacing, grid.plane_spacing],
            "excluded_rows": sorted(grid.excluded_rows),
        },
        "needles": needles.needle_list() if needles is not None else [],
        "seeds": seeds.seed_list() if seeds is not None else [],
        "source_strength_U": seeds.source_strength if seeds is not None else None,
        "case_id": case_id,
    }
    if prob is not None:
        doc["prob_values"] = [float(v) for v in prob.values.ravel()]
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_plan(path) -> PlanFile:
    path = Path(path)
    doc = _read_json(path, "SPPLAN1")
    g = doc["grid"]
    try:
        grid = TemplateGrid(
            rows=int(g["rows"]),
            cols=int(g["cols"]),
            in_plane_spacing=float(g["spacing_mm"][0]),
            plane_spacing=float(g["spacing_mm"][1]),
            num_planes=int(g["planes"]),
            excluded_rows=frozenset(int(r) for r in g["excluded_rows"]),
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed grid block ({exc})") from None

    out = PlanFile(grid=grid, case_id=doc.get("case_id", ""))
    if doc.get("needles"):
        occ = np.zeros((grid.n_eff_rows, grid.cols), np.uint8)
        for r, c in doc["needles"]:
            _check_grid_pos(path, grid, r, c)
            occ[grid.eff_index(int(r)), int(c)] = 1
        out.needles = NeedlePlan(grid, occ)
    if doc.get("seeds"):
        occ = np.zeros((grid.n_eff_rows, grid.cols, grid.num_planes), np.uint8)
        for r, c, p in doc["seeds"]:
            _check_grid_pos(path, grid, r, c)
            if not 0 <= int(p) < grid.num_planes:
                raise ValidationError(f"{path}: seed plane {p} out of range")
            occ[grid.eff_index(int(r)), int(c), int(p)] = 1
        strength = doc.get("source_strength_U")
        out.seeds = SeedPlan(grid, occ, float(strength) if strength else 0.6)
    if doc.get("prob_values") is not None:
        shape = (grid.n_eff_rows, grid.cols, grid.num_planes)
        flat = np.asarray(doc["prob_values"], np.float64)
        if flat.size != int(np.prod(shape)):
            raise ValidationError(
                f"{path}: prob_values has {flat.size} entries, grid needs {np.prod(shape)}"
            )
        out.prob = ProbPlan(grid, flat.reshape(shape))
    return out


def _check_grid_pos(path, grid, r, c):
    if not 0 <= int(r) < grid.rows or not 0 <= int(c) < grid.cols:
        raise ValidationError(f"{path}: position ({r},{c}) outside grid")
    if int(r) in grid.excluded_rows:
        raise ValidationError(f"{path}: position ({r},{c}) in excluded row")


def write_manifest(path, entries, master_seed: int = None,
                   augmented_train_samples: int = None) -> Path:
    """entries: [{case_id, case_file, needle_file, plan_file, split}]."""
    for e in entries:
        if e["split"] not in ("train", "val", "test"):
            raise ValidationError(f"bad split tag {e['split']!r}")
    doc = {"magic": "SPMANIFEST1", "cases": list(entries)}
    if master_seed is not None:
        doc["master_seed"] = int(master_seed)
    if augmented_train_samples is not None:
        doc["augmented_train_samples"] = int(augmented_train_samples)
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_manifest(path) -> dict:
    return _read_json(Path(path), "SPMANIFEST1")


def _read_json(path: Path, magic: str) -> dict:
    try:
        doc = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ValidationError(f"{path}: unreadable ({exc})") from None
    if not isinstance(doc, dict) or doc.get("magic") != magic:
        raise ValidationError(f"{path}: bad magic, expected {magic}")
    return doc


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def write_golden(path, pred: np.ndarray, target: np.ndarray, weights,
                 d_real: float, d_fake: float, expected: dict,
                 expected_grad_adj: np.ndarray = None) -> Path:
    """Loss-parity fixture; floats printed with 17 significant digits."""
    dims = list(pred.shape)
    parts = [
        '{\n "magic": "SPGOLD1",',
        f' "dims": {json.dumps(dims)},',
        ' "weights": {"alpha": %s, "beta": %s, "adjacency_threshold": %s},'
        % (_g17(weights.alpha), _g17(weights.beta), _g17(weights.adjacency_threshold)),
        f' "d_real": {_g17(d_real)},',
        f' "d_fake": {_g17(d_fake)},',
        ' "pred": [%s],' % ", ".join(_g17(v) for v in np.asarray(pred).ravel()),
        ' "target": [%s],' % ", ".join(_g17(v) for v in np.asarray(target).ravel()),
        ' "expected": {%s}%s'
        % (
            ", ".join(f'"{k}": {_g17(v)}' for k, v in expected.items()),
            "," if expected_grad_adj is not None else "",
        ),
    ]
    if expected_grad_adj is not None:
        parts.append(
            ' "expected_grad_adj": [%s]'
            % ", ".join(_g17(v) for v in np.asarray(expected_grad_adj).ravel())
        )
    parts.append("}\n")
    path = Path(path)
    path.write_text("\n".join(parts))
    return path


def read_golden(path) -> dict:
    doc = _read_json(Path(path), "SPGOLD1")
    dims = tuple(int(d) for d in doc["dims"])
    for key in ("pred", "target"):
        arr = np.asarray(doc[key], np.float64)
        if arr.size != int(np.prod(dims)):
            raise ValidationError(f"{path}: {key} length mismatch")
        doc[key] = arr.reshape(dims)
    if "expected_grad_adj" in doc:
        doc["expected_grad_adj"] = np.asarray(
            doc["expected_grad_adj"], np.float64).reshape(dims)
    return doc
