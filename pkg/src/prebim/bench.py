"""Selection and estimation metrics, and the seeded replication sweep."""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .direction import infer_direction_effects
from .discovery import find_valid_iv_sets
from .estimators import ols_estimate
from .model import DiscoveryConfig, PrebimError, ValidityLabels
from .simulator import ScenarioSpec, draw_scenario_params, generate_dataset

DIRECTIONS = ("xy", "yx")
CSV_COLUMNS = ("scenario", "direction", "n", "reps", "csr", "csr_paper_verbatim",
               "mse", "naive_mse", "failures")


def _true_set(labels: ValidityLabels, direction: str):
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return set(labels.valid_for_xy if direction == "xy" else labels.valid_for_yx)


def csr(selected, labels: ValidityLabels, direction: str, g: int) -> float:
    """Per-direction classification accuracy over all g variants.

    A variant counts as correct when it is selected and truly valid for the
    direction, or unselected and not valid for it.
    """
    selected = set(int(j) for j in selected)
    truth = _true_set(labels, direction)
    if any(j < 0 or j >= g for j in selected | truth):
        raise ValueError("variant index out of range")
    hits = len(selected & truth) + (g - len(selected | truth))
    return hits / g


def csr_verbatim(selected, labels: ValidityLabels, direction: str, g: int) -> float:
    """Correctly selected valid variants divided by the number of variants."""
    return len(set(int(j) for j in selected) & _true_set(labels, direction)) / g


def mse(estimates: Sequence[Optional[float]], truth, penalty: float = 0.0) -> float:
    """Mean squared error; ``None`` entries are replaced by ``penalty``.

    ``truth`` is a scalar or one true value per estimate (simulated sweeps
    redraw the effect every replication).
    """
    if len(estimates) == 0:
        raise ValueError("need at least one estimate")
    vals = np.array([penalty if e is None else e for e in estimates], dtype=np.float64)
    return float(np.mean((vals - np.asarray(truth, dtype=np.float64)) ** 2))


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    beta_xy: float
    beta_yx: float
    beta_hat_xy: Optional[float]
    beta_hat_yx: Optional[float]
    naive_xy: float
    naive_yx: float
    csr_xy: float
    csr_yx: float
    csr_verbatim_xy: float
    csr_verbatim_yx: float
    failed: bool
    error: str = ""


@dataclass
class BenchmarkReport:
    scenario: ScenarioSpec
    replications: int
    csr_xy: float
    csr_yx: float
    csr_verbatim_xy: float
    csr_verbatim_yx: float
    mse_xy: float
    mse_yx: float
    baseline_mse_xy: float
    baseline_mse_yx: float
    failures: int
    wall_time: float = field(default=0.0, compare=False)
    results: tuple = field(default=(), repr=False, compare=False)

    def rows(self):
        """One CSV row per direction."""
        for d in DIRECTIONS:
            yield {
                "scenario": self.scenario.label + ("" if self.scenario.bidirectional else "-oneway")
                + ("-dep" if self.scenario.correlated_valid else ""),
                "direction": "X->Y" if d == "xy" else "Y->X",
                "n": self.scenario.sample_size,
                "reps": self.replications,
                "csr": f"{getattr(self, 'csr_' + d):.6f}",
                "csr_paper_verbatim": f"{getattr(self, 'csr_verbatim_' + d):.6f}",
                "mse": f"{getattr(self, 'mse_' + d):.6f}",
                "naive_mse": f"{getattr(self, 'baseline_mse_' + d):.6f}",
                "failures": self.failures,
            }

    def to_dict(self, include_replications: bool = False) -> dict:
        out = {
            "scenario": self.scenario.to_dict(),
            "replications": self.replications,
            "csr_xy": self.csr_xy,
            "csr_yx": self.csr_yx,
            "csr_verbatim_xy": self.csr_verbatim_xy,
            "csr_verbatim_yx": self.csr_verbatim_yx,
            "mse_xy": self.mse_xy,
            "mse_yx": self.mse_yx,
            "baseline_mse_xy": self.baseline_mse_xy,
            "baseline_mse_yx": self.baseline_mse_yx,
            "failures": self.failures,
            "wall_time": self.wall_time,
        }
        if include_replications:
            out["per_replication"] = [asdict(r) for r in self.results]
        return out


def replication_seeds(spec: ScenarioSpec, rep: int, master_seed: int):
    """Parameter and data seeds for one replication.

    The parameter seed ignores the sample size, so sweeps over n reuse the
    same ground truth for each replication index.
    """
    key = [int(master_seed), int(spec.seed), spec.n_valid_xy, spec.n_valid_yx, spec.n_total,
           int(spec.bidirectional), int(spec.correlated_valid), int(rep)]
    return np.random.SeedSequence(key), np.random.SeedSequence(key + [spec.sample_size])


def run_replication(spec: ScenarioSpec, rep: int, config: DiscoveryConfig,
                    master_seed: int) -> ReplicationResult:
    param_seed, data_seed = replication_seeds(spec, rep, master_seed)
    params, labels = draw_scenario_params(spec, np.random.default_rng(param_seed))
    data = generate_dataset(params, spec, np.random.default_rng(data_seed))
    g = data.g
    naive_xy = ols_estimate(data.x, data.y)
    naive_yx = ols_estimate(data.y, data.x)
    try:
        sets = find_valid_iv_sets(data, config)
        est = infer_direction_effects(data, sets, config.tolerance)
        sel_xy, sel_yx = est.assigned_xy, est.assigned_yx
        hat_xy, hat_yx = est.beta_hat_xy, est.beta_hat_yx
        failed, error = False, ""
    except PrebimError as err:
        sel_xy, sel_yx, hat_xy, hat_yx = (), (), None, None
        failed, error = True, f"{type(err).__name__}: {err}"
    return ReplicationResult(
        index=rep,
        beta_xy=params.beta_xy,
        beta_yx=params.beta_yx,
        beta_hat_xy=hat_xy,
        beta_hat_yx=hat_yx,
        naive_xy=naive_xy,
        naive_yx=naive_yx,
        csr_xy=csr(sel_xy, labels, "xy", g),
        csr_yx=csr(sel_yx, labels, "yx", g),
        csr_verbatim_xy=csr_verbatim(sel_xy, labels, "xy", g),
        csr_verbatim_yx=csr_verbatim(sel_yx, labels, "yx", g),
        failed=failed,
        error=error,
    )


def aggregate(spec: ScenarioSpec, results: Sequence[ReplicationResult], penalty: float = 0.0,
              wall_time: float = 0.0) -> BenchmarkReport:
    results = tuple(sorted(results, key=lambda r: r.index))

    def col(name):
        return [getattr(r, name) for r in results]

    return BenchmarkReport(
        scenario=spec,
        replications=len(results),
        csr_xy=float(np.mean(col("csr_xy"))),
        csr_yx=float(np.mean(col("csr_yx"))),
        csr_verbatim_xy=float(np.mean(col("csr_verbatim_xy"))),
        csr_verbatim_yx=float(np.mean(col("csr_verbatim_yx"))),
        mse_xy=mse(col("beta_hat_xy"), col("beta_xy"), penalty),
        mse_yx=mse(col("beta_hat_yx"), col("beta_yx"), penalty),
        baseline_mse_xy=mse(col("naive_xy"), col("beta_xy")),
        baseline_mse_yx=mse(col("naive_yx"), col("beta_yx")),
        failures=sum(r.failed for r in results),
        wall_time=wall_time,
        results=results,
    )


def _run_chunk(args):
    spec, reps, config, master_seed = args
    return [run_replication(spec, r, config, master_seed) for r in reps]


def run_benchmark(specs: Sequence[ScenarioSpec], reps: int, config: DiscoveryConfig = DiscoveryConfig(),
                  master_seed: int = 0, workers: int = 1, penalty: float = 0.0) -> list:
    """Run ``reps`` seeded replications of every scenario and aggregate them.

    Results depend only on (specs, reps, config, master_seed); ``workers``
    changes the wall time, not the numbers.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    reports = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for spec in specs:
            start = time.perf_counter()
            if pool is None:
                results = _run_chunk((spec, range(reps), config, master_seed))
            else:
                chunks = [range(i, reps, workers) for i in range(workers)]
                results = [r for part in pool.map(
                    _run_chunk, [(spec, c, config, master_seed) for c in chunks]) for r in part]
            reports.append(aggregate(spec, results, penalty, time.perf_counter() - start))
    finally:
        if pool is not None:
            pool.shutdown()
    return reports


# ---------------------------------------------------------------------------
# spec files and report output
# ---------------------------------------------------------------------------

def bundled_specs():
    return sorted(p.name[:-5] for p in (resources.files("prebim") / "data").iterdir() if p.name.endswith(".json"))


def load_spec_file(path_or_name):
    """Load a sweep description from a path or a bundled name such as ``table1_desk``.

    Returns ``(specs, reps, master_seed, config_overrides)``.
    """
    path = Path(path_or_name)
    if path.is_file():
        doc = json.loads(path.read_text(encoding="utf-8"))
    else:
        name = str(path_or_name)
        name = name[:-5] if name.endswith(".json") else name
        if name not in bundled_specs():
            raise FileNotFoundError(f"no spec file or bundled spec named {path_or_name!r}")
        doc = json.loads((resources.files("prebim") / "data" / (name + ".json")).read_text("utf-8"))
    specs = []
    for entry in doc["scenarios"]:
        sizes = entry["n"] if isinstance(entry["n"], list) else [entry["n"]]
        for n in sizes:
            specs.append(ScenarioSpec(
                n_valid_xy=entry["a"],
                n_valid_yx=entry["b"],
                n_total=entry["g"],
                sample_size=int(n),
                bidirectional=entry.get("bidirectional", True),
                correlated_valid=entry.get("correlated_valid", False),
                seed=entry.get("seed", 0),
            ))
    return specs, int(doc.get("reps", 100)), int(doc.get("seed", 0)), dict(doc.get("config", {}))


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        writer.writerows(rep.rows())
    return buf.getvalue()


def plot_data_csv(reports) -> str:
    """Tidy long-format rows for metric-versus-n curves."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "direction", "method", "metric", "n", "value"])
    for rep in reports:
        label = rep.scenario.label
        for d in DIRECTIONS:
            arrow = "X->Y" if d == "xy" else "Y->X"
            n = rep.scenario.sample_size
            writer.writerow([label, arrow, "PReBiM", "csr", n, f"{getattr(rep, 'csr_' + d):.6f}"])
            writer.writerow([label, arrow, "PReBiM", "mse", n, f"{getattr(rep, 'mse_' + d):.6f}"])
            writer.writerow([label, arrow, "NAIVE", "mse", n, f"{getattr(rep, 'baseline_mse_' + d):.6f}"])
    return buf.getvalue()


def format_table(reports) -> str:
    """Text table with one row per scenario and sample size, both directions side by side."""
    head = f"{'scenario':<18}{'n':>7}  {'CSR X->Y':>9}{'MSE X->Y':>10}{'NAIVE':>8}  " \
           f"{'CSR Y->X':>9}{'MSE Y->X':>10}{'NAIVE':>8}{'fail':>6}"
    lines = [head, "-" * len(head)]
    for r in reports:
        name = r.scenario.label + ("" if r.scenario.bidirectional else " 1-dir") \
            + (" dep" if r.scenario.correlated_valid else "")
        lines.append(
            f"{name:<18}{r.scenario.sample_size:>7}  {r.csr_xy:>9.3f}{r.mse_xy:>10.3f}"
            f"{r.baseline_mse_xy:>8.3f}  {r.csr_yx:>9.3f}{r.mse_yx:>10.3f}{r.baseline_mse_yx:>8.3f}"
            f"{r.failures:>6}"
        )
    return "\n".join(lines)
