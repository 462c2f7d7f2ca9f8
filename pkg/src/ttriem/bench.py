"""Benchmark harness: seeded instances, timed method runs, CSV output, and
the AD-cost-versus-evaluation-cost ratio measurement.
"""

import csv
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import objectives as obj_mod
from .baselines import compute_method
from .errors import DimensionError, UnavailableMethodError
from .tt import (
    orthogonalize,
    random_symmetric_ttmat,
    random_tt,
    random_ttmat,
)
from .ttmanifold import (
    _block_cores,
    _delta_seed,
    hess_vec_tt,
    project_tt,
    riemannian_grad_tt,
    tangent_axpy,
    tangent_dot_tt,
)

__all__ = [
    "BenchConfig",
    "BenchRecord",
    "FUNCTIONS",
    "make_instance",
    "bench_run",
    "write_csv",
    "complexity_ratios",
    "sample_indices",
]

FUNCTIONS = ("qf", "gram", "rayleigh", "completion", "expmach")

CSV_COLUMNS = [
    "function", "method", "op", "d", "n", "rx", "rz", "ra",
    "seconds_mean", "seconds_std", "residual_vs_ad",
]


@dataclass
class BenchConfig:
    function: str
    method: str
    op: str
    d: int
    n: int
    rx: int
    rz: int
    ra: int
    trials: int = 3
    seed: int = 0
    out: str = ""

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise DimensionError(f"unknown function {self.function!r}")
        if self.method not in ("naive", "optimized", "ad"):
            raise DimensionError(f"unknown method {self.method!r}")
        if self.op not in ("grad", "hvp"):
            raise DimensionError(f"unknown op {self.op!r}")
        if min(self.d, self.n, self.rx, self.rz, self.ra) < 1:
            raise DimensionError("sizes and ranks must be positive")
        if self.trials < 1:
            raise DimensionError("trials must be at least 1")


@dataclass
class BenchRecord:
    config: BenchConfig
    seconds_mean: float = float("nan")
    seconds_std: float = float("nan")
    residual_vs_ad: float = float("nan")
    available: bool = True
    note: str = ""

    def row(self):
        cfg = asdict(self.config)
        out = {k: cfg[k] for k in CSV_COLUMNS if k in cfg}
        if self.available:
            out["seconds_mean"] = f"{self.seconds_mean:.6e}"
            out["seconds_std"] = f"{self.seconds_std:.6e}"
            out["residual_vs_ad"] = (
                f"{self.residual_vs_ad:.6e}" if np.isfinite(self.residual_vs_ad) else ""
            )
        else:
            out["seconds_mean"] = ""
            out["seconds_std"] = ""
            out["residual_vs_ad"] = ""
        return out


def sample_indices(rng, mode_sizes, count):
    """Distinct multi-indices, uniformly without replacement."""
    total = int(np.prod([float(n) for n in mode_sizes]))
    count = min(count, total)
    if total <= 10**7:
        flat = rng.choice(total, size=count, replace=False)
    else:
        seen = set()
        while len(seen) < count:
            draw = rng.integers(0, total, size=count - len(seen))
            seen.update(int(v) for v in draw)
        flat = np.fromiter(seen, dtype=np.int64, count=count)
    return np.array(np.unravel_index(flat, mode_sizes)).T


def make_instance(cfg: BenchConfig):
    """Seeded deterministic instance: objective, base point and direction."""
    rng = np.random.default_rng(cfg.seed)
    modes = (cfg.n,) * cfg.d
    x = random_tt(rng, modes, cfg.rx)
    base = orthogonalize(x)
    z = project_tt(base, random_tt(rng, modes, cfg.rz))
    if cfg.function == "qf":
        objective = obj_mod.quadratic_form(random_symmetric_ttmat(rng, modes, cfg.ra))
    elif cfg.function == "gram":
        objective = obj_mod.gram_quadratic_form(random_ttmat(rng, modes, modes, cfg.ra))
    elif cfg.function == "rayleigh":
        objective = obj_mod.rayleigh_quotient(random_symmetric_ttmat(rng, modes, cfg.ra))
    elif cfg.function == "completion":
        count = 10 * cfg.d * cfg.n * cfg.rx**2
        idx = sample_indices(rng, modes, count)
        omega = obj_mod.IndexSet(idx, rng.standard_normal(len(idx)))
        objective = obj_mod.completion_loss(omega)
    else:
        ws = [random_tt(rng, modes, 1) for _ in range(32)]
        ys = rng.choice([-1.0, 1.0], size=32)
        objective = obj_mod.expmachines_loss(ws, ys)
    return objective, base, z


def _tangent_rel_residual(a, b):
    diff = tangent_axpy(-1.0, b, a)
    denom = np.sqrt(max(tangent_dot_tt(b, b), 0.0))
    return float(np.sqrt(max(tangent_dot_tt(diff, diff), 0.0)) / max(denom, 1e-300))


def bench_run(cfg: BenchConfig):
    """Warm up once, time ``trials`` repetitions, report agreement vs AD."""
    objective, base, z = make_instance(cfg)
    record = BenchRecord(config=cfg)

    def run():
        return compute_method(objective, cfg.method, cfg.op, base,
                              z if cfg.op == "hvp" else None)

    try:
        result = run()  # warmup
    except UnavailableMethodError as exc:
        record.available = False
        record.note = str(exc)
        return [record]
    times = []
    for _ in range(cfg.trials):
        t0 = time.perf_counter()
        run()
        times.append(time.perf_counter() - t0)
    record.seconds_mean = float(np.mean(times))
    record.seconds_std = float(np.std(times)) if cfg.trials > 1 else 0.0
    reference = result if cfg.method == "ad" else compute_method(
        objective, "ad", cfg.op, base, z if cfg.op == "hvp" else None)
    record.residual_vs_ad = _tangent_rel_residual(result, reference)
    return [record]


def write_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.row())


def complexity_ratios(d=6, n=10, rank=5, op_rank=5, trials=7, seed=0):
    """Median ratios time(AD grad or hvp) / time(forward evaluation).

    The denominator is one plain (untaped) evaluation of the objective
    program at the tangent parametrization: that forward pass is the
    baseline the reverse sweeps are a constant multiple of.  Numerator and
    denominator are timed interleaved and the ratio is taken per trial, so
    machine-load drift largely cancels.
    """
    rng = np.random.default_rng(seed)
    modes = (n,) * d
    x = random_tt(rng, modes, rank)
    base = orthogonalize(x)
    z = project_tt(base, random_tt(rng, modes, rank))
    objective = obj_mod.quadratic_form(random_symmetric_ttmat(rng, modes, op_rank))
    block = [np.asarray(c.value if hasattr(c, "value") else c)
             for c in _block_cores(base, _delta_seed(base))]
    point = [np.asarray(c) for c in x.cores]

    # warmup
    objective.evaluate(block)
    objective.evaluate(point)
    riemannian_grad_tt(objective.evaluate, base)
    hess_vec_tt(objective.evaluate, base, z)

    grad_ratios, hvp_ratios, evals, point_evals = [], [], [], []
    for _ in range(trials):
        t0 = time.perf_counter()
        objective.evaluate(point)
        t_point = time.perf_counter() - t0
        t0 = time.perf_counter()
        objective.evaluate(block)
        t_eval = time.perf_counter() - t0
        t0 = time.perf_counter()
        riemannian_grad_tt(objective.evaluate, base)
        t_grad = time.perf_counter() - t0
        t0 = time.perf_counter()
        hess_vec_tt(objective.evaluate, base, z)
        t_hvp = time.perf_counter() - t0
        evals.append(t_eval)
        point_evals.append(t_point)
        grad_ratios.append(t_grad / t_eval)
        hvp_ratios.append(t_hvp / t_eval)
    return {
        "grad_over_eval": float(np.median(grad_ratios)),
        "hvp_over_eval": float(np.median(hvp_ratios)),
        "eval_seconds": float(np.median(evals)),
        "point_eval_seconds": float(np.median(point_evals)),
    }
