"""Readers and writers for the planning engine's file formats.

This package talks to the engine only through its documented formats:
SPVOL1 volume containers, SPPLAN1 plan documents, SPCASE1 case documents,
SPMANIFEST1 manifests, SPGOLD1 loss fixtures, and the SPLOSS1 loss
definition file. The implementations here are deliberately independent of
the engine's own code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_DTYPES = {"u8": np.dtype("u1"), "f32le": np.dtype("<f4")}


class FormatError(ValueError):
    pass


def _read_json(path: Path, magic: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable ({exc})") from None
    if not isinstance(doc, dict) or doc.get("magic") != magic:
        raise FormatError(f"{path}: expected magic {magic}")
    return doc


def read_volume(path):
    blob = Path(path).read_bytes()
    marker = b"end_header\n"
    cut = blob.find(marker)
    if cut < 0:
        raise FormatError(f"{path}: missing end_header")
    lines = blob[:cut].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0] != "SPVOL1":
        raise FormatError(f"{path}: expected magic SPVOL1")
    fields = dict(ln.partition(" ")[::2] for ln in lines[1:])
    dims = tuple(int(v) for v in fields["dims"].split())
    spacing = tuple(float(v) for v in fields["spacing_mm"].split())
    dtype = _DTYPES[fields["dtype"]]
    payload = blob[cut + len(marker):]
    if len(payload) != int(fields["payload_bytes"]) or \
            len(payload) != int(np.prod(dims)) * dtype.itemsize:
        raise FormatError(f"{path}: payload length mismatch")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy(), spacing


@dataclass
class Case:
    ptv: np.ndarray
    ctv: np.ndarray
    urethra: np.ndarray
    rectum: np.ndarray
    spacing: tuple
    template_origin: tuple
    case_id: str


def read_case(path) -> Case:
    path = Path(path)
    doc = _read_json(path, "SPCASE1")
    vols = {}
    for key in ("ptv", "ctv", "urethra", "rectum"):
        values, _ = read_volume(path.parent / doc["volumes"][key])
        vols[key] = values
    return Case(spacing=tuple(doc["spacing_mm"]),
                template_origin=tuple(doc["template_origin_mm"]),
                case_id=doc.get("case_id", ""), **vols)


@dataclass
class Plan:
    rows: int
    cols: int
    planes: int
    in_plane_spacing: float
    plane_spacing: float
    excluded_rows: tuple
    needles: list  # [(template_row, col)]
    seeds: list  # [(template_row, col, plane)]
    prob: np.ndarray = None  # (eff_rows, cols, planes) or None
    source_strength: float = None
    case_id: str = ""

    @property
    def eff_rows(self) -> tuple:
        return tuple(r for r in range(self.rows) if r not in self.excluded_rows)

    def needle_matrix(self) -> np.ndarray:
        eff = {r: i for i, r in enumerate(self.eff_rows)}
        occ = np.zeros((len(eff), self.cols), np.uint8)
        for r, c in self.needles:
            occ[eff[r], c] = 1
        return occ

    def seed_matrix(self) -> np.ndarray:
        eff = {r: i for i, r in enumerate(self.eff_rows)}
        occ = np.zeros((len(eff), self.cols, self.planes), np.uint8)
        for r, c, p in self.seeds:
            occ[eff[r], c, p] = 1
        return occ


def read_plan(path) -> Plan:
    path = Path(path)
    doc = _read_json(path, "SPPLAN1")
    g = doc["grid"]
    plan = Plan(
        rows=int(g["rows"]), cols=int(g["cols"]), planes=int(g["planes"]),
        in_plane_spacing=float(g["spacing_mm"][0]),
        plane_spacing=float(g["spacing_mm"][1]),
        excluded_rows=tuple(int(r) for r in g["excluded_rows"]),
        needles=[tuple(int(v) for v in rc) for rc in doc.get("needles", [])],
        seeds=[tuple(int(v) for v in rcp) for rcp in doc.get("seeds", [])],
        source_strength=doc.get("source_strength_U"),
        case_id=doc.get("case_id", ""),
    )
    if doc.get("prob_values") is not None:
        shape = (len(plan.eff_rows), plan.cols, plan.planes)
        flat = np.asarray(doc["prob_values"], np.float64)
        if flat.size != int(np.prod(shape)):
            raise FormatError(f"{path}: prob_values length mismatch")
        plan.prob = flat.reshape(shape)
    return plan


def write_prob_plan(path, prob: np.ndarray, needles: list, case_id: str = "",
                    rows: int = 11, cols: int = 13, planes: int = 14,
                    spacing=(5.0, 5.0), excluded_rows=(0,)) -> Path:
    """Write a probability plan the engine's plan-file mode can consume."""
    doc = {
        "magic": "SPPLAN1",
        "grid": {
            "rows": rows, "cols": cols, "planes": planes,
            "spacing_mm": [float(spacing[0]), float(spacing[1])],
            "excluded_rows": sorted(int(r) for r in excluded_rows),
        },
        "needles": [list(map(int, rc)) for rc in needles],
        "seeds": [],
        "source_strength_U": None,
        "case_id": case_id,
        "prob_values": [float(v) for v in np.asarray(prob, np.float64).ravel()],
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_manifest(path) -> dict:
    return _read_json(Path(path), "SPMANIFEST1")


def read_golden(path) -> dict:
    doc = _read_json(Path(path), "SPGOLD1")
    dims = tuple(int(d) for d in doc["dims"])
    for key in ("pred", "target"):
        doc[key] = np.asarray(doc[key], np.float64).reshape(dims)
    if "expected_grad_adj" in doc:
        doc["expected_grad_adj"] = np.asarray(
            doc["expected_grad_adj"], np.float64).reshape(dims)
    return doc


def read_loss_config(path) -> dict:
    doc = _read_json(Path(path), "SPLOSS1")
    kernel = np.asarray(doc["kernel"], np.float64).reshape(doc["kernel_dims"])
    return {
        "alpha": float(doc["alpha"]),
        "beta": float(doc["beta"]),
        "threshold": float(doc["adjacency_threshold"]),
        "kernel": kernel,
    }


def find_engine_loss_config() -> Path:
    """Locate the engine's shipped loss definition file, if installed."""
    try:
        from importlib import resources

        ref = resources.files("seedplan.data") / "loss_config.json"
        with resources.as_file(ref) as p:
            return Path(str(p))
    except (ImportError, FileNotFoundError) as exc:
        raise FormatError(
            "engine loss definition not found; pass an explicit path") from exc
