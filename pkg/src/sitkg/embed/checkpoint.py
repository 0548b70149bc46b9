"""Model checkpoint as versioned TSV of labeled vectors.

Layout, one record per line, tab separated::

    #sitkg-checkpoint   1
    config      <field>     <value>
    entity      <kind>      <label>     <v0> <v1> ...
    relation    <relation>  <v0> ...
    projection  <relation>  <row>       <v0> ...      (TransR)
    gate        <name>      <row>       <v0> ...      (W_g, W_z, b_g)
    trace       <epoch>     <mean loss>

Floats are written with ``repr`` so reading recovers them bit for bit.
"""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..kg_core import NodeKind
from .models import RELATIONS, EmbeddingConfig, ModelParams

MAGIC = "#sitkg-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _vals(row) -> str:
    return "\t".join(repr(float(x)) for x in row)


def save_checkpoint(model: ModelParams, path: str | Path) -> None:
    lines = [f"{MAGIC}\t{VERSION}"]
    for key, value in asdict(model.config).items():
        lines.append(f"config\t{key}\t{value}")
    E = model.arrays["entity"]
    for (kind, label), row in zip(model.entities, E):
        lines.append(f"entity\t{kind.value}\t{label}\t{_vals(row)}")
    for rel, row in zip(RELATIONS, model.arrays["relation"]):
        lines.append(f"relation\t{rel.value}\t{_vals(row)}")
    if "projection" in model.arrays:
        for rel, mat in zip(RELATIONS, model.arrays["projection"]):
            for i, row in enumerate(mat):
                lines.append(f"projection\t{rel.value}\t{i}\t{_vals(row)}")
    for name in ("W_g", "W_z", "b_g"):
        if name in model.arrays:
            for i, row in enumerate(np.atleast_2d(model.arrays[name])):
                lines.append(f"gate\t{name}\t{i}\t{_vals(row)}")
    for epoch, loss in enumerate(model.loss_trace):
        lines.append(f"trace\t{epoch}\t{float(loss)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> ModelParams:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != f"{MAGIC}\t{VERSION}":
        raise CheckpointError(f"{path}: not a version {VERSION} checkpoint")
    config: dict[str, str] = {}
    entities, erows = [], []
    relations: dict[str, list[float]] = {}
    projection: dict[str, dict[int, list[float]]] = {}
    gate: dict[str, dict[int, list[float]]] = {}
    trace: list[float] = []
    try:
        for line in text[1:]:
            cols = line.split("\t")
            tag = cols[0]
            if tag == "config":
                config[cols[1]] = cols[2]
            elif tag == "entity":
                entities.append((NodeKind(cols[1]), cols[2]))
                erows.append([float(x) for x in cols[3:]])
            elif tag == "relation":
                relations[cols[1]] = [float(x) for x in cols[2:]]
            elif tag == "projection":
                projection.setdefault(cols[1], {})[int(cols[2])] = [float(x) for x in cols[3:]]
            elif tag == "gate":
                gate.setdefault(cols[1], {})[int(cols[2])] = [float(x) for x in cols[3:]]
            elif tag == "trace":
                trace.append(float(cols[2]))
            else:
                raise CheckpointError(f"unknown record {tag!r}")
    except (IndexError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None

    cfg = EmbeddingConfig.from_mapping(config)
    arrays = {
        "entity": np.array(erows, dtype=float).reshape(len(erows), cfg.entity_width),
        "relation": np.array([relations[r.value] for r in RELATIONS], dtype=float),
    }
    if projection:
        arrays["projection"] = np.array(
            [[projection[r.value][i] for i in range(cfg.dim)] for r in RELATIONS], dtype=float
        )
    for name, rows in gate.items():
        mat = np.array([rows[i] for i in range(len(rows))], dtype=float)
        arrays[name] = mat[0] if name == "b_g" else mat
    return ModelParams(cfg, entities, arrays, trace)


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    return (
        a.config == b.config
        and a.entities == b.entities
        and a.arrays.keys() == b.arrays.keys()
        and all(np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)
        and a.loss_trace == b.loss_trace
    )

