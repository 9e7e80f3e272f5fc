"""Monte Carlo power and Type I error studies over (n, hazard ratio, method) grids."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .gee import gee_test
from .km import binary_dataset, logrank_test
from .markov import computational_pvalue
from .simulate import MODEL_ALIASES, MODELS
from .weighted_logrank import weighted_logrank

METHODS = ("km", "logrank-on-binary", "wta-analytic", "wta-computational", "gee")
RESULT_COLUMNS = ("model", "n", "hr", "method", "power", "mc_se", "replicates")


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class PowerGrid:
    model: str
    sample_sizes: tuple[int, ...]
    hazard_ratios: tuple[float, ...]
    replicates: int = 1000
    methods: tuple[str, ...] = ("km", "wta-analytic", "gee")
    alpha: float = 0.05
    root_seed: int = 0
    n_sims: int = 200
    km_threshold: int | None = None

    def __post_init__(self):
        model = MODEL_ALIASES.get(self.model, self.model)
        if model not in MODELS:
            raise GridError(f"unknown model {self.model!r}; valid: {', '.join(MODELS)}")
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "hazard_ratios", tuple(float(h) for h in self.hazard_ratios))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods:
            raise GridError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise GridError(f"unknown method(s) {bad}; valid: {', '.join(METHODS)}")
        if not self.sample_sizes or not self.hazard_ratios:
            raise GridError("sample_sizes and hazard_ratios must be non-empty")
        if any(n < 2 or n % 2 for n in self.sample_sizes):
            raise GridError("sample sizes must be even integers >= 2")
        if any(h < 1.0 for h in self.hazard_ratios):
            raise GridError("hazard ratios must be >= 1.0")
        if self.replicates < 1:
            raise GridError("replicates must be >= 1")
        if not 0 < self.alpha < 1:
            raise GridError("alpha must lie in (0, 1)")
        if "wta-computational" in self.methods and self.n_sims < 100:
            raise GridError("n_sims must be at least 100")

    @property
    def threshold(self) -> int:
        if self.km_threshold is not None:
            return self.km_threshold
        # first worsening above the common starting state
        config_cls, _ = MODELS[self.model]
        start = getattr(config_cls(n_patients=2), "start_stage", 0)
        return start + 1

    def to_dict(self) -> dict:
        return asdict(self)


def _int_list(value) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    return tuple(int(v) for v in value)


def _float_list(value) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    return tuple(float(v) for v in value)


def _str_list(value) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    return tuple(str(v) for v in value)


_FIELDS = {
    "model": str,
    "sample_sizes": _int_list,
    "hazard_ratios": _float_list,
    "replicates": int,
    "methods": _str_list,
    "alpha": float,
    "root_seed": int,
    "seed": int,
    "n_sims": int,
    "km_threshold": int,
}


def grid_from_mapping(raw: dict) -> PowerGrid:
    values = {}
    for key, value in raw.items():
        if value is None:
            continue
        key = key.strip().replace("-", "_")
        if key not in _FIELDS:
            raise GridError(f"unknown grid key {key!r}")
        values["root_seed" if key == "seed" else key] = _FIELDS[key](value)
    if "model" not in values:
        raise GridError("grid needs a model")
    return PowerGrid(**values)


def load_grid(path) -> PowerGrid:
    """Read a grid from JSON or from ``key = value`` lines (``#`` comments)."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return grid_from_mapping(json.loads(text))
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GridError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return grid_from_mapping(raw)


@dataclass(frozen=True)
class PowerCell:
    model: str
    n: int
    hr: float
    method: str
    rejections: int
    replicates: int
    p_values: tuple[float, ...] = ()

    @property
    def power(self) -> float:
        return self.rejections / self.replicates

    @property
    def mc_se(self) -> float:
        p = self.power
        return math.sqrt(p * (1 - p) / self.replicates)


@dataclass(frozen=True)
class PowerResult:
    grid: PowerGrid
    cells: tuple[PowerCell, ...] = field(default_factory=tuple)

    def cell(self, n: int, hr: float, method: str) -> PowerCell:
        for c in self.cells:
            if c.n == n and math.isclose(c.hr, hr) and c.method == method:
                return c
        raise KeyError((n, hr, method))

    def power(self, n: int, hr: float, method: str) -> float:
        return self.cell(n, hr, method).power

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for c in self.cells:
            writer.writerow((c.model, c.n, repr(c.hr), c.method, repr(c.power),
                             repr(c.mc_se), c.replicates))
        return out.getvalue()


def trial_seed(root_seed: int, n: int, hr: float, replicate: int) -> int:
    """Integer seed for one simulated trial, keyed by its grid coordinates."""
    ss = np.random.SeedSequence(
        int(root_seed), spawn_key=(int(n), int(round(hr * 1_000_000)), int(replicate))
    )
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _evaluate(method: str, data, grid: PowerGrid, seed: int) -> float:
    if method == "km":
        return logrank_test(data, grid.threshold).p_value
    if method == "logrank-on-binary":
        return weighted_logrank(binary_dataset(data, grid.threshold)).p_value
    if method == "wta-analytic":
        return weighted_logrank(data).p_value
    if method == "wta-computational":
        return computational_pvalue(data, grid.n_sims, seed=seed ^ 0x5EED).p_value
    if method == "gee":
        return gee_test(data).p_value
    raise GridError(f"unknown method {method!r}")


def run_replicate(grid: PowerGrid, n: int, hr: float, replicate: int) -> tuple[float, ...]:
    """Simulate one trial and return one p-value per method, in grid order."""
    seed = trial_seed(grid.root_seed, n, hr, replicate)
    config_cls, simulate = MODELS[grid.model]
    data = simulate(config_cls(n_patients=n, hazard_ratio=hr), seed)
    return tuple(_evaluate(m, data, grid, seed) for m in grid.methods)


def _run_chunk(args):
    grid, n, hr, reps = args
    return [run_replicate(grid, n, hr, k) for k in reps]


def run_power_study(
    grid: PowerGrid,
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
    keep_p_values: bool = False,
) -> PowerResult:
    """Rejection fraction of every method in every (n, hr) cell.

    Results depend only on the grid (root seed included), never on ``workers``.
    """
    cells = []
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for n in grid.sample_sizes:
            for hr in grid.hazard_ratios:
                if pool is None:
                    pvals = [run_replicate(grid, n, hr, k) for k in range(grid.replicates)]
                else:
                    chunks = np.array_split(np.arange(grid.replicates), workers * 4)
                    jobs = [(grid, n, hr, c.tolist()) for c in chunks if len(c)]
                    pvals = [row for part in pool.map(_run_chunk, jobs) for row in part]
                pmat = np.array(pvals, dtype=float).reshape(grid.replicates, len(grid.methods))
                for i, method in enumerate(grid.methods):
                    col = pmat[:, i]
                    cells.append(PowerCell(
                        grid.model, n, hr, method, int(np.count_nonzero(col < grid.alpha)),
                        grid.replicates, tuple(col.tolist()) if keep_p_values else (),
                    ))
                if progress is not None:
                    summary = ", ".join(
                        f"{c.method}={c.power:.3f}" for c in cells[-len(grid.methods):]
                    )
                    progress(f"[{grid.model}] n={n} hr={hr}: {summary}")
    finally:
        if pool is not None:
            pool.shutdown()
    return PowerResult(grid, tuple(cells))


def stderr_progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def export_power(result: PowerResult, out_dir, stem: str = "power") -> list[Path]:
    """Write the results CSV and a power-vs-n SVG faceted by hazard ratio."""
    from .plot import power_svg

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    svg_path = out_dir / f"{stem}.svg"
    csv_path.write_text(result.to_csv(), encoding="utf-8")
    svg_path.write_text(power_svg(result.cells), encoding="utf-8")
    return [csv_path, svg_path]


def read_power_csv(text: str) -> list[PowerCell]:
    cells = []
    for row in csv.DictReader(io.StringIO(text)):
        reps = int(row["replicates"])
        cells.append(PowerCell(
            row["model"], int(row["n"]), float(row["hr"]), row["method"],
            int(round(float(row["power"]) * reps)), reps,
        ))
    return cells


def smallest_n_reaching(result: PowerResult, hr: float, method: str, target: float) -> int | None:
    for n in sorted(result.grid.sample_sizes):
        if result.power(n, hr, method) >= target:
            return n
    return None


__all__ = [
    "METHODS",
    "GridError",
    "PowerGrid",
    "PowerCell",
    "PowerResult",
    "load_grid",
    "grid_from_mapping",
    "run_power_study",
    "run_replicate",
    "export_power",
    "read_power_csv",
    "smallest_n_reaching",
    "trial_seed",
]
