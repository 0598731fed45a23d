"""Orbit catalog files: a JSON document plus a raw float64 sample file."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .classical import BRAKE, PeriodicOrbit, SymmetryConstraint

FORMAT_VERSION = 1


def _encode_family(k):
    return BRAKE if k == BRAKE else int(k)


def _decode_family(k):
    return BRAKE if k == BRAKE else int(k)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(".samples.bin")


def save_catalog(path, orbits) -> Path:
    """Write ``path`` (JSON) and its sample sidecar; returns the sidecar path."""
    path = Path(path)
    side = sidecar_path(path)
    entries = []
    offset = 0
    blobs = []
    for o in orbits:
        c = o.constraint
        n = len(o.samples)
        entries.append({
            "id": o.id,
            "symmetry_class": o.symmetry_class,
            "start": _encode_family(c.start),
            "end": _encode_family(c.end),
            "crossing": c.crossing,
            "reference_energy": o.energy,
            "start_coordinate": o.start_coordinate,
            "period": o.period,
            "action": o.action,
            "maslov": o.maslov,
            "maslov_override": o.maslov_override,
            "stability": o.stability,
            "monodromy": np.asarray(o.monodromy).tolist(),
            "bounces": o.bounces,
            "residual": o.residual,
            "hyperbolic": o.hyperbolic,
            "sample_count": n,
            "sample_offset": offset,
        })
        blobs.append(np.ascontiguousarray(o.samples, dtype="<f8").tobytes())
        offset += n
    doc = {"format": "scarbasis-orbit-catalog", "version": FORMAT_VERSION,
           "samples_file": side.name, "record": ["x", "y", "px", "py"], "orbits": entries}
    path.write_text(json.dumps(doc, indent=1))
    side.write_bytes(b"".join(blobs))
    return side


def load_catalog(path) -> list[PeriodicOrbit]:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported catalog version {doc.get('version')}")
    raw = np.frombuffer((path.parent / doc["samples_file"]).read_bytes(), dtype="<f8")
    data = raw.reshape(-1, 4)
    out = []
    for e in doc["orbits"]:
        lo = e["sample_offset"]
        samples = np.array(data[lo:lo + e["sample_count"]], dtype=float)
        if len(samples) != e["sample_count"]:
            raise ValueError(f"{path}: sample file too short for orbit {e['id']}")
        out.append(PeriodicOrbit(
            id=e["id"], samples=samples, energy=e["reference_energy"], period=e["period"],
            constraint=SymmetryConstraint(_decode_family(e["start"]), _decode_family(e["end"]),
                                          e["crossing"]),
            start_coordinate=e["start_coordinate"], action=e["action"], maslov=e["maslov"],
            stability=e["stability"], monodromy=np.array(e["monodromy"], dtype=float),
            bounces=e["bounces"], residual=e["residual"], hyperbolic=e["hyperbolic"],
            maslov_override=e["maslov_override"]))
    return out
