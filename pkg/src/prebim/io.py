"""Dataset CSV and ground-truth JSON files."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import Dataset, InvalidDatasetError, ModelParams, ValidityLabels

SCHEMA_VERSION = 1


def read_dataset_csv(path, center: bool = True) -> Dataset:
    """Read a ``x,y,G_1,...,G_g`` CSV file.

    Variant names come from the header; the file must have at least one
    data row.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidDatasetError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if len(header) < 2 or [h.lower() for h in header[:2]] != ["x", "y"]:
        raise InvalidDatasetError(f"{path}: header must start with x,y")
    if not rows:
        raise InvalidDatasetError(f"{path}: no data rows")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as err:
        raise InvalidDatasetError(f"{path}: {err}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InvalidDatasetError(f"{path}: every row needs {len(header)} fields")
    names = tuple(h or f"G_{i + 1}" for i, h in enumerate(header[2:]))
    return Dataset(data[:, 0], data[:, 1], data[:, 2:], names, center=center)


def _format_column(col):
    if np.all(col == np.round(col)) and np.all(np.abs(col) < 2 ** 53):
        return [str(int(v)) for v in col]
    return ["%.17g" % v for v in col]


def write_dataset_csv(path, x, y, genotypes, variant_names=None) -> None:
    genotypes = np.asarray(genotypes, dtype=np.float64)
    g = genotypes.shape[1]
    names = list(variant_names) if variant_names else [f"G_{i + 1}" for i in range(g)]
    columns = [_format_column(np.asarray(x, dtype=np.float64)),
               _format_column(np.asarray(y, dtype=np.float64))]
    columns += [_format_column(genotypes[:, j]) for j in range(g)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y"] + names)
        writer.writerows(zip(*columns))


def params_to_dict(params: ModelParams) -> dict:
    out = {
        "beta_xy": params.beta_xy,
        "beta_yx": params.beta_yx,
        "gamma_x": params.gamma_x.tolist(),
        "gamma_y": params.gamma_y.tolist(),
        "gamma_u": params.gamma_u.tolist(),
        "gamma_xu": params.gamma_xu,
        "gamma_yu": params.gamma_yu,
        "variant_variances": params.variant_variances.tolist(),
        "noise_variances": list(params.noise_variances),
        "maf": None if params.maf is None else params.maf.tolist(),
        "dependence": None,
    }
    if params.dependence is not None:
        j, k, c = params.dependence
        out["dependence"] = {"source": j, "target": k, "coefficient": c}
    return out


def params_from_dict(d: dict) -> ModelParams:
    dep = d.get("dependence")
    return ModelParams(
        beta_xy=d["beta_xy"],
        beta_yx=d["beta_yx"],
        gamma_x=d["gamma_x"],
        gamma_y=d["gamma_y"],
        gamma_u=d["gamma_u"],
        gamma_xu=d["gamma_xu"],
        gamma_yu=d["gamma_yu"],
        variant_variances=d["variant_variances"],
        noise_variances=tuple(d.get("noise_variances", (1.0, 1.0, 1.0))),
        maf=d.get("maf"),
        dependence=None if dep is None else (dep["source"], dep["target"], dep["coefficient"]),
    )


def labels_to_dict(labels: ValidityLabels) -> dict:
    return {
        "valid_for_xy": list(labels.valid_for_xy),
        "valid_for_yx": list(labels.valid_for_yx),
        "roles": list(labels.roles),
        "dependent_pair": None if labels.dependent_pair is None else list(labels.dependent_pair),
    }


def labels_from_dict(d: dict) -> ValidityLabels:
    pair = d.get("dependent_pair")
    return ValidityLabels(
        valid_for_xy=tuple(d["valid_for_xy"]),
        valid_for_yx=tuple(d["valid_for_yx"]),
        roles=tuple(d.get("roles", ())),
        dependent_pair=None if pair is None else tuple(pair),
    )


def write_truth_json(path, params: ModelParams, labels: ValidityLabels, scenario=None) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenario": None if scenario is None else scenario.to_dict(),
        "params": params_to_dict(params),
        "labels": labels_to_dict(labels),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_truth_json(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return params_from_dict(doc["params"]), labels_from_dict(doc["labels"])


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
