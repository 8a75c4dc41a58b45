"""Guaranteed reachability bounds on an IMC via interval iteration.

The property is reach-while-avoid: hit a target cell before leaving the
domain. Target cells are absorbing at value 1 and are excluded from Bellman
sums; their incoming mass lives in the per-state reward bounds [r_low, r_up],
and domain-exit mass in the loss bounds [l_low, l_up] at value 0.

Two passes resolve the transition-interval uncertainty adversarially:

  * min pass: nature minimizes; the limit V_min lower-bounds the true
    reachability probability of any chain consistent with the intervals.
  * max pass: nature maximizes; the limit V_max upper-bounds it.

Each pass iterates two envelopes from 0 and from 1 with the same Bellman
operator (each envelope gets its own optimal witness), so the lower envelope
rises, the upper falls, and both always bracket the pass's fixpoint; the
pass stops when they agree to within ``nu``. This keeps the reported bounds
sound even when iteration is cut off early.

The per-state optimization is a fractional knapsack: sort successors (plus
the reward pseudo-successor at value 1 and the loss pseudo-successor at
value 0) by value, give every item its lower bound, then spend the leftover
probability mass in sorted order up to each item's upper bound. Ties are
broken by cell id (pseudo-items sort last). The hot loop is JIT-compiled
with numba when available; set BTREACH_NO_NUMBA=1 to force the pure-numpy
fallback, which computes identical values.

Entries to target cells are dropped from the Bellman sums; their mass, and
the mass of destinations the abstraction pruned, is already folded into
each state's reward upper bound, so assigning reward value 1 dominates any
routing of that mass. V_max is additionally raised by the per-state pruned
ledger (clamped to 1) after the passes finish, a second, strictly
conservative guard on the same mass.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .abstraction import Imc
from .errors import InfeasibleError
from .partition import int_to_bits

_FEAS_TOL = 1e-9


@dataclass
class InnerProblem:
    """One state's distribution family: box-bounded successors plus reward/loss."""

    values: np.ndarray
    t_low: np.ndarray
    t_up: np.ndarray
    r_low: float
    r_up: float
    l_low: float
    l_up: float
    succ_ids: np.ndarray = None

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        self.t_low = np.atleast_1d(np.asarray(self.t_low, dtype=float))
        self.t_up = np.atleast_1d(np.asarray(self.t_up, dtype=float))
        k = self.values.size
        if self.t_low.shape != (k,) or self.t_up.shape != (k,):
            raise ValueError("bounds must match the number of successors")
        if self.succ_ids is None:
            self.succ_ids = np.arange(k, dtype=np.int64)
        else:
            self.succ_ids = np.asarray(self.succ_ids, dtype=np.int64)


@dataclass
class InnerSolution:
    value: float
    t: np.ndarray
    r: float
    l: float


def _greedy_alloc(vals, lows, ups, ids, maximize):
    """Optimal feasible allocation; returns (objective, allocation)."""
    key = -vals if maximize else vals
    order = np.lexsort((ids, key))
    rem = 1.0 - lows.sum()
    if rem < -_FEAS_TOL:
        raise InfeasibleError("lower bounds already exceed total mass 1")
    room = ups[order] - lows[order]
    cum_before = np.cumsum(room) - room
    take = np.clip(rem - cum_before, 0.0, room)
    if rem - take.sum() > _FEAS_TOL:
        raise InfeasibleError("upper bounds cannot absorb total mass 1")
    t = lows.copy()
    t[order] += take
    return float(np.dot(t, vals)), t


def solve_inner(problem: InnerProblem, sense: str) -> InnerSolution:
    """Extremal expected value over the state's distribution family.

    sense is "max" or "min". Reward counts as a pseudo-successor of value 1
    and loss of value 0; on value ties items are taken in cell-id order with
    the pseudo-items after every real cell.
    """
    if sense not in ("max", "min"):
        raise ValueError("sense must be 'max' or 'min'")
    k = problem.values.size
    pseudo_base = int(problem.succ_ids.max(initial=-1)) + 1
    vals = np.concatenate([problem.values, [1.0, 0.0]])
    lows = np.concatenate([problem.t_low, [problem.r_low, problem.l_low]])
    ups = np.concatenate([problem.t_up, [problem.r_up, problem.l_up]])
    ids = np.concatenate([problem.succ_ids, [pseudo_base, pseudo_base + 1]])
    value, t = _greedy_alloc(vals, lows, ups, ids, maximize=(sense == "max"))
    return InnerSolution(value=value, t=t[:k], r=float(t[k]), l=float(t[k + 1]))


# -- Bellman step over all rows ----------------------------------------------

_NUMBA_KERNEL = None


def _numba_enabled() -> bool:
    return os.environ.get("BTREACH_NO_NUMBA", "") == ""


def _get_numba_kernel():
    global _NUMBA_KERNEL
    if _NUMBA_KERNEL is not None:
        return _NUMBA_KERNEL
    try:
        from numba import njit, prange
    except ImportError:
        return None

    @njit(parallel=True, cache=True)
    def step(indptr, indices, tlo, tup, rlo, rup, llo, lup, rows, V, maximize, out):
        for ii in prange(rows.size):
            s = rows[ii]
            beg = indptr[s]
            k = indptr[s + 1] - beg
            m = k + 2
            vals = np.empty(m)
            lows = np.empty(m)
            ups = np.empty(m)
            for j in range(k):
                vals[j] = V[indices[beg + j]]
                lows[j] = tlo[beg + j]
                ups[j] = tup[beg + j]
            vals[k] = 1.0
            lows[k] = rlo[s]
            ups[k] = rup[s]
            vals[k + 1] = 0.0
            lows[k + 1] = llo[s]
            ups[k + 1] = lup[s]
            key = np.empty(m)
            if maximize:
                for j in range(m):
                    key[j] = -vals[j]
            else:
                for j in range(m):
                    key[j] = vals[j]
            # entries are in ascending-cell order and mergesort is stable,
            # so value ties resolve by cell id with pseudo-items last
            order = np.argsort(key, kind="mergesort")
            rem = 1.0
            obj = 0.0
            for j in range(m):
                rem -= lows[j]
                obj += lows[j] * vals[j]
            for oj in range(m):
                if rem <= 0.0:
                    break
                j = order[oj]
                room = ups[j] - lows[j]
                take = room if room < rem else rem
                obj += take * vals[j]
                rem -= take
            out[s] = obj

    _NUMBA_KERNEL = step
    return step


def _step_python(indptr, indices, tlo, tup, rlo, rup, llo, lup, rows, V, maximize, out):
    # mirrors the numba kernel operation for operation (same gathers, same
    # stable sort, same sequential accumulation), so both steppers produce
    # bit-identical iterates
    for s in rows:
        beg, end = indptr[s], indptr[s + 1]
        idx = indices[beg:end]
        vals = np.concatenate([V[idx], [1.0, 0.0]])
        lows = np.concatenate([tlo[beg:end], [rlo[s], llo[s]]])
        ups = np.concatenate([tup[beg:end], [rup[s], lup[s]]])
        key = -vals if maximize else vals
        order = np.argsort(key, kind="mergesort")
        rem = 1.0
        obj = 0.0
        for j in range(vals.size):
            rem -= lows[j]
            obj += lows[j] * vals[j]
        for j in order:
            if rem <= 0.0:
                break
            room = ups[j] - lows[j]
            take = room if room < rem else rem
            obj += take * vals[j]
            rem -= take
        out[s] = obj


@dataclass
class ValueBounds:
    """Per-cell certified bounds plus iteration bookkeeping."""

    v_min: np.ndarray
    v_max: np.ndarray
    nu: float
    iterations: tuple
    gaps: tuple
    converged: bool


def _solver_form(imc: Imc):
    """Strip target-destination entries; their mass lives in the reward bounds."""
    tmask = imc.target_mask
    keep = ~tmask[imc.indices]
    row_of_entry = np.repeat(
        np.arange(imc.n_states, dtype=np.int64), np.diff(imc.indptr)
    )
    kept_rows = row_of_entry[keep]
    counts = np.bincount(kept_rows, minlength=imc.n_states)
    indptr = np.zeros(imc.n_states + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return (
        indptr,
        imc.indices[keep].copy(),
        imc.t_low[keep].copy(),
        imc.t_up[keep].copy(),
        kept_rows,
        tmask,
    )


def _validate_rows(imc, indptr, tlo, tup, kept_rows, rows):
    low_sum = np.bincount(kept_rows, weights=tlo, minlength=imc.n_states)
    up_sum = np.bincount(kept_rows, weights=tup, minlength=imc.n_states)
    bad_low = (imc.r_low + imc.l_low + low_sum)[rows] > 1.0 + _FEAS_TOL
    bad_up = (imc.r_up + imc.l_up + up_sum)[rows] < 1.0 - _FEAS_TOL
    if bad_low.any() or bad_up.any():
        s = int(rows[np.argmax(bad_low | bad_up)])
        raise InfeasibleError(f"state {s} has an empty distribution family")


def interval_iteration(
    imc: Imc,
    nu: float = 1e-8,
    max_iters: int = 1_000_000,
    threads: int = None,
    use_numba: bool = None,
    trace: dict = None,
) -> ValueBounds:
    """Run both adversarial passes until envelopes agree to within ``nu``.

    Returns sound bounds even when ``max_iters`` hits first (``converged``
    is False and the achieved gaps are reported). Passing a dict as
    ``trace`` records the envelope pair after every iteration under keys
    "min" and "max", for diagnostics.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    indptr, indices, tlo, tup, kept_rows, tmask = _solver_form(imc)
    rows = np.flatnonzero(~tmask).astype(np.int64)
    _validate_rows(imc, indptr, tlo, tup, kept_rows, rows)

    kernel = _get_numba_kernel() if (use_numba or use_numba is None) else None
    if use_numba is None and not _numba_enabled():
        kernel = None
    if use_numba and kernel is None:
        raise RuntimeError("numba requested but unavailable")
    if kernel is not None and threads is not None:
        import numba

        numba.set_num_threads(threads)
    stepper = kernel if kernel is not None else _step_python

    def step(V, maximize):
        out = V.copy()
        stepper(
            indptr, indices, tlo, tup,
            imc.r_low, imc.r_up, imc.l_low, imc.l_up,
            rows, V, maximize, out,
        )
        return out

    def run_pass(maximize):
        v_lo = np.zeros(imc.n_states)
        v_lo[tmask] = 1.0
        v_hi = np.ones(imc.n_states)
        log = None if trace is None else trace.setdefault(
            "max" if maximize else "min", []
        )
        gap = float("inf")
        iters = 0
        while iters < max_iters:
            v_lo = step(v_lo, maximize)
            v_hi = step(v_hi, maximize)
            iters += 1
            if log is not None:
                log.append((v_lo.copy(), v_hi.copy()))
            gap = float(np.max(np.abs(v_hi - v_lo)))
            if gap <= nu:
                break
        return v_lo, v_hi, iters, gap, gap <= nu

    lo_min, _, it_min, gap_min, ok_min = run_pass(maximize=False)
    _, hi_max, it_max, gap_max, ok_max = run_pass(maximize=True)
    v_max = np.minimum(hi_max + imc.pruned, 1.0)
    return ValueBounds(
        v_min=lo_min,
        v_max=v_max,
        nu=nu,
        iterations=(it_min, it_max),
        gaps=(gap_min, gap_max),
        converged=ok_min and ok_max,
    )


@dataclass
class Certificate:
    """Certified probability interval for reaching the target from s_init."""

    s_init: int
    bits: str
    v_min: float
    v_max: float
    confidence: float
    nu: float
    iterations: tuple
    gaps: tuple
    converged: bool

    def summary(self) -> str:
        return (
            f"certificate: cell {self.s_init} ({self.bits}) reach probability in "
            f"[{self.v_min:.10g}, {self.v_max:.10g}] "
            f"with confidence >= {self.confidence:.6g} "
            f"(nu={self.nu:g}, iterations={self.iterations[0]}+{self.iterations[1]}, "
            f"converged={self.converged})"
        )

    def to_json(self) -> str:
        payload = {
            "format": "certificate-v1",
            "s_init": self.s_init,
            "bits": self.bits,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "confidence": self.confidence,
            "nu": self.nu,
            "iterations": list(self.iterations),
            "gaps": list(self.gaps),
            "converged": self.converged,
        }
        return json.dumps(payload, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        payload = json.loads(text)
        if payload.get("format") != "certificate-v1":
            raise ValueError("not a certificate payload")
        return cls(
            s_init=int(payload["s_init"]),
            bits=payload["bits"],
            v_min=float(payload["v_min"]),
            v_max=float(payload["v_max"]),
            confidence=float(payload["confidence"]),
            nu=float(payload["nu"]),
            iterations=tuple(payload["iterations"]),
            gaps=tuple(payload["gaps"]),
            converged=bool(payload["converged"]),
        )


def certify(imc: Imc, bounds: ValueBounds) -> Certificate:
    """Certificate at the IMC's initial state."""
    s = imc.s_init
    return Certificate(
        s_init=s,
        bits=int_to_bits(s, imc.q),
        v_min=float(bounds.v_min[s]),
        v_max=float(bounds.v_max[s]),
        confidence=imc.confidence,
        nu=bounds.nu,
        iterations=bounds.iterations,
        gaps=bounds.gaps,
        converged=bounds.converged,
    )


def save_values(bounds: ValueBounds, q: int, path):
    """Per-cell results: ``cell_id bitstring v_min v_max`` rows."""
    with open(path, "w") as fh:
        fh.write("# columns: cell_id bitstring v_min v_max\n")
        for s in range(bounds.v_min.size):
            fh.write(
                f"{s} {int_to_bits(s, q)} "
                f"{bounds.v_min[s]:.17g} {bounds.v_max[s]:.17g}\n"
            )


def load_values(path, n_states: int = None) -> tuple:
    """Read a values file back as (v_min, v_max), indexed by cell id.

    Pass ``n_states`` to additionally reject truncated files.
    """
    table = np.loadtxt(path, comments="#", usecols=(0, 2, 3), ndmin=2)
    order = np.argsort(table[:, 0].astype(np.int64), kind="stable")
    table = table[order]
    ids = table[:, 0].astype(np.int64)
    want = ids.size if n_states is None else n_states
    if not np.array_equal(ids, np.arange(want)):
        raise ValueError("values file must cover every cell exactly once")
    return table[:, 1].copy(), table[:, 2].copy()


def warmup_jit():
    """Trigger numba compilation on a two-state toy so timed runs stay clean."""
    kernel = _get_numba_kernel() if _numba_enabled() else None
    if kernel is None:
        return False
    indptr = np.array([0, 1, 2], dtype=np.int64)
    indices = np.array([1, 0], dtype=np.int64)
    tlo = np.array([0.2, 0.2])
    tup = np.array([0.4, 0.4])
    rlo = np.array([0.1, 0.1])
    rup = np.array([0.5, 0.5])
    llo = np.array([0.1, 0.1])
    lup = np.array([0.7, 0.7])
    rows = np.array([0, 1], dtype=np.int64)
    V = np.zeros(2)
    out = np.zeros(2)
    kernel(indptr, indices, tlo, tup, rlo, rup, llo, lup, rows, V, True, out)
    return True
