"""Constrained design-space search: maximize the entropy score under a flop
budget and a depth-to-width cap.

The program solved exactly, by enumeration over the aligned grid:

    maximize   entropy_invariant(d, w, B)
    subject to flops(d, w, B; ref resolution) <= budget
               B <= rho * w          (exact rational comparison)
               d_range, w_range, b_range;  w, B multiples of the grid step

Ties break toward lower flops, then lower d, then lower B, then lower w, so
results are unique and bit-deterministic. All flop values are exact integers
and the rho test is done on integers (B * rho.denominator <=
rho.numerator * w), so feasibility never depends on float rounding.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction

from . import archmodel
from .archmodel import ArchConfig, EntropyReport, FlopsReport


def as_fraction(x) -> Fraction:
    """Exact rational from user input. Floats go through their decimal repr,
    so rho=0.7 means exactly 7/10, not the nearest binary float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as a ratio")


@dataclass(frozen=True)
class SearchConstraints:
    budget_gflops: float
    rho: Fraction
    d_range: tuple = (1, 4)
    w_range: tuple = (8, 512)
    b_range: tuple = (4, 512)
    grid: int = 4
    c_in: int = 4
    c_out: int = 3
    ref_h: int = 256
    ref_w: int = 256

    def __post_init__(self):
        object.__setattr__(self, "rho", as_fraction(self.rho))
        if self.budget_gflops <= 0:
            raise ValueError("budget must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.grid < 1:
            raise ValueError("grid must be >= 1")
        for name in ("d_range", "w_range", "b_range"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must satisfy 1 <= lo <= hi, got ({lo}, {hi})")

    @property
    def budget_flops(self) -> int:
        return round(self.budget_gflops * 1e9)

    def grid_values(self, lo: int, hi: int) -> range:
        start = ((lo + self.grid - 1) // self.grid) * self.grid
        return range(start, hi + 1, self.grid)

    def to_dict(self) -> dict:
        return {
            "budget_gflops": self.budget_gflops,
            "budget_flops": self.budget_flops,
            "rho": str(self.rho),
            "d_range": list(self.d_range),
            "w_range": list(self.w_range),
            "b_range": list(self.b_range),
            "grid": self.grid,
            "c_in": self.c_in,
            "c_out": self.c_out,
            "ref_resolution": [self.ref_h, self.ref_w],
        }


@dataclass(frozen=True)
class SearchResult:
    constraints: SearchConstraints
    feasible_count: int
    best: ArchConfig | None
    best_entropy: float | None
    best_flops: int | None
    frontier: tuple = ()

    @property
    def status(self) -> str:
        return "ok" if self.best is not None else "infeasible"

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "constraints": self.constraints.to_dict(),
            "feasible_count": self.feasible_count,
        }
        if self.best is not None:
            out["best"] = archmodel.config_to_dict(self.best)
            out["entropy"] = self.best_entropy
            out["flops"] = self.best_flops
            out["gflops"] = self.best_flops / 1e9
        out["frontier"] = [
            {
                "config": archmodel.config_to_dict(cfg),
                "entropy": ent,
                "flops": fl,
            }
            for cfg, ent, fl in self.frontier
        ]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _candidate_key(entropy: float, flops: int, d: int, w: int, b: int):
    """Sort key implementing the tie-break order; max() picks the winner."""
    return (entropy, -flops, -d, -b, -w)


def _iter_feasible(constraints: SearchConstraints):
    """Yield (entropy, flops, d, w, B) for every feasible grid point, in
    ascending (d, w, B) order.

    The entropy score is accumulated term by term in exactly the order of
    archmodel.conv_layer_list, so the floats here are bit-identical to
    entropy_invariant(config).score for the same config.
    """
    c = constraints
    budget = c.budget_flops
    num, den = c.rho.numerator, c.rho.denominator
    b_all = list(c.grid_values(*c.b_range))
    if not b_all:
        return
    for d in range(c.d_range[0], c.d_range[1] + 1):
        stem_term = archmodel.layer_entropy_term(
            archmodel.stem_conv_spec(ArchConfig(d=d, w=4, B=0, c_in=c.c_in, c_out=c.c_out))
        )
        p = (c.ref_h // d) * (c.ref_w // d)
        d2 = d * d
        for w in c.grid_values(*c.w_range):
            block_terms = [archmodel.layer_entropy_term(s) for s in archmodel.block_conv_specs(w)]
            tail_term = archmodel.layer_entropy_term(
                archmodel.tail_conv_spec(ArchConfig(d=d, w=w, B=0, c_in=c.c_in, c_out=c.c_out))
            )
            density = archmodel.density_term_invariant(
                ArchConfig(d=d, w=w, B=0, c_in=c.c_in, c_out=c.c_out)
            )
            stem_tail_macs = p * w * c.c_in * d2 + p * w * c.c_out * d2
            per_block_macs = p * archmodel.block_macs_per_pixel(w)
            per_block_elem = archmodel.BLOCK_ELEMENTWISE_PER_PIXEL * w * p
            b_cap = (num * w) // den  # largest B with B*den <= num*w
            body = 0.0
            body += stem_term
            blocks_done = 0
            for b in b_all:
                if b > b_cap:
                    break
                flops = 2 * (stem_tail_macs + b * per_block_macs) + b * per_block_elem
                if flops > budget:
                    break
                while blocks_done < b:
                    for t in block_terms:
                        body += t
                    blocks_done += 1
                entropy = density * (body + tail_term)
                yield entropy, flops, d, w, b


def enumerate_feasible(constraints: SearchConstraints):
    """Materialize every feasible point with its full reports, in ascending
    (d, w, B) order. Intended for small grids; solve() streams instead."""
    out: list[tuple[ArchConfig, EntropyReport, FlopsReport]] = []
    for _entropy, _flops, d, w, b in _iter_feasible(constraints):
        cfg = ArchConfig(d=d, w=w, B=b, c_in=constraints.c_in, c_out=constraints.c_out)
        out.append(
            (cfg, archmodel.entropy_invariant(cfg), archmodel.flops(cfg, constraints.ref_h, constraints.ref_w))
        )
    return out


def solve(constraints: SearchConstraints, frontier_size: int = 10) -> SearchResult:
    """Exact argmax over the feasible set, plus the top frontier_size points."""
    count = 0
    pool: list[tuple] = []
    for entropy, flops, d, w, b in _iter_feasible(constraints):
        count += 1
        pool.append((entropy, flops, d, w, b))
    if not pool:
        return SearchResult(constraints=constraints, feasible_count=0, best=None, best_entropy=None, best_flops=None)
    pool.sort(key=lambda t: _candidate_key(t[0], t[1], t[2], t[3], t[4]), reverse=True)
    top = pool[: max(frontier_size, 1)]
    frontier = tuple(
        (ArchConfig(d=d, w=w, B=b, c_in=constraints.c_in, c_out=constraints.c_out), ent, fl)
        for ent, fl, d, w, b in top
    )
    best_ent, best_fl, d, w, b = top[0]
    best = ArchConfig(d=d, w=w, B=b, c_in=constraints.c_in, c_out=constraints.c_out)
    return SearchResult(
        constraints=constraints,
        feasible_count=count,
        best=best,
        best_entropy=best_ent,
        best_flops=best_fl,
        frontier=frontier,
    )


# ---------------------------------------------------------------------------
# Budget/ratio sweeps


@dataclass(frozen=True)
class SweepRow:
    budget_gflops: float
    rho: Fraction
    result: SearchResult


@dataclass
class Sweep:
    rows: list = field(default_factory=list)

    def to_dicts(self) -> list:
        out = []
        for row in self.rows:
            d = {
                "budget_gflops": row.budget_gflops,
                "rho": repr(float(row.rho)),
                "status": row.result.status,
            }
            if row.result.best is not None:
                cfg = row.result.best
                d.update(
                    {
                        "d": cfg.d,
                        "w": cfg.w,
                        "B": cfg.B,
                        "entropy": row.result.best_entropy,
                        "flops": row.result.best_flops,
                    }
                )
            out.append(d)
        return out

    def to_csv(self) -> str:
        cols = ["budget_gflops", "rho", "d", "w", "B", "entropy", "flops"]
        lines = [",".join(cols)]
        for d in self.to_dicts():
            lines.append(
                ",".join(
                    "" if d.get(k) is None else (repr(d[k]) if isinstance(d[k], float) else str(d[k]))
                    for k in cols
                )
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps([r.result.to_dict() for r in self.rows], indent=2, sort_keys=True) + "\n"


def sweep(budgets_gflops, rhos, frontier_size: int = 10, **constraint_kwargs) -> Sweep:
    """solve() every (budget, rho) cell; rows in budget-major order."""
    result = Sweep()
    for budget in budgets_gflops:
        for rho in rhos:
            constraints = SearchConstraints(budget_gflops=budget, rho=as_fraction(rho), **constraint_kwargs)
            result.rows.append(SweepRow(budget_gflops=budget, rho=constraints.rho, result=solve(constraints, frontier_size)))
    return result


def write_sweep_csv(sweep_result: Sweep, path):
    with open(path, "w", newline="") as fh:
        fh.write(sweep_result.to_csv())


def read_sweep_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
