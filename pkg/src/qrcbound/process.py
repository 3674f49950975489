"""Event-driven simulation of the multi-component model by thinning.

Every component draws proposal times from the majorant ``Q`` in its own
elapsed time. A proposal at elapsed time ``s`` is accepted with probability
``(phi(s) + mu_i(x)) / Q(s)``; at an atom of ``Q`` the ratio of the jump
masses of ``phi`` and ``Q`` is used instead. Rejected proposals are redrawn
from the ``Q``-residual at ``s``.

Two copies started from different states can be run side by side
(:class:`PairedState`). At each epoch where every component of both copies
has renewed since the previous epoch, and all elapsed times are below the
threshold, the next proposals of every not yet merged component pair are
drawn through a maximal coupling. A pair merges when both copies renew at
the same instant through a coincident draw; from then on it shares
proposals and uniforms. The coupling time is the first time every pair is
merged, after which the two trajectories are identical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CouplerConstructionError, ModelViolationError, RunawayIntensityError
from .model import ProcessSpec
from .streams import chunks, fan_out, stream

__all__ = [
    "Kernel",
    "ProcessState",
    "SimulationTrace",
    "step",
    "simulate_until",
    "simulate_batch",
    "BatchResult",
    "PairedState",
    "coupled_step",
    "coupling_epoch",
    "CouplingResult",
    "simulate_coupled",
    "CoupledResult",
    "write_trace_csv",
]

EVENT_GUARD = 10**8
RATIO_TOL = 1e-9
ATOM_SNAP = 1e-9
PLAIN, ZETA, OTHER = 0, 1, 2
REJECTION_ROUNDS = 100_000


class Kernel:
    """Vectorized proposal, marking and acceptance rules for one model."""

    def __init__(self, spec: ProcessSpec):
        self.spec = spec
        self.phi = spec.phi
        self.Q = spec.Q
        self.qlocs = np.asarray(self.Q.atom_locs, dtype=float)
        wq = np.asarray(self.Q.atom_weights, dtype=float)
        wphi = np.zeros_like(wq)
        for k, b in enumerate(self.qlocs):
            for a, w in zip(self.phi.atom_locs, self.phi.atom_weights):
                if abs(a - b) <= 1e-12 * max(1.0, b):
                    wphi[k] = w
        self.zeta_mass = -np.expm1(-wphi)
        self.other_mass = np.exp(-wphi) - np.exp(-wq)
        self.q_mass = -np.expm1(-wq)
        self.wq = wq
        with np.errstate(invalid="ignore", divide="ignore"):
            self.ratio = np.where(self.q_mass > 0, self.zeta_mass / self.q_mass, 0.0)

    def atom_index(self, s: np.ndarray, tol: float = 0.0):
        """``(hit, index)``: whether ``s`` is a ``Q``-atom and which one."""
        s = np.asarray(s, dtype=float)
        n = self.qlocs.size
        if n == 0:
            return np.zeros(s.shape, dtype=bool), np.zeros(s.shape, dtype=int)
        idx = np.clip(np.searchsorted(self.qlocs, s), 0, n - 1)
        lower = np.clip(idx - 1, 0, n - 1)
        closer = np.abs(self.qlocs[lower] - s) < np.abs(self.qlocs[idx] - s)
        idx = np.where(closer, lower, idx)
        hit = np.abs(self.qlocs[idx] - s) <= tol * np.maximum(1.0, np.abs(s))
        return hit, idx

    def propose(self, ages: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Elapsed time of the next ``Q``-proposal after ``ages``."""
        ages = np.asarray(ages, dtype=float)
        e = rng.standard_exponential(ages.shape)
        return np.asarray(self.Q.inverse_total_hazard(np.asarray(self.Q.total_hazard(ages)) + e), dtype=float)

    def _cont(self, s):
        phi_s = np.asarray(self.phi.hazard(s), dtype=float)
        q_s = np.asarray(self.Q.hazard(s), dtype=float)
        return phi_s, q_s

    def zeta_prob(self, s: np.ndarray) -> np.ndarray:
        hit, idx = self.atom_index(s)
        phi_s, q_s = self._cont(np.where(np.isfinite(s), s, 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(q_s > 0, phi_s / q_s, 0.0)
        if self.qlocs.size:
            p = np.where(hit, self.ratio[idx], p)
        return np.minimum(p, 1.0)

    def accept_prob(self, s: np.ndarray, mark: np.ndarray, mu: np.ndarray, states: np.ndarray, comp: int) -> np.ndarray:
        """Acceptance probability of proposals at elapsed times ``s``."""
        hit, idx = self.atom_index(s)
        phi_s, q_s = self._cont(s)
        with np.errstate(invalid="ignore", divide="ignore"):
            plain = np.where(q_s > 0, (phi_s + mu) / q_s, 0.0)
            other = np.where(q_s - phi_s > 0, mu / (q_s - phi_s), 0.0)
        cont = np.where(mark == OTHER, other, plain)
        bad = (cont > 1.0 + RATIO_TOL) & ~hit & (mark != ZETA)
        if bad.any():
            k = int(np.argmax(bad))
            raise ModelViolationError(
                f"component {comp}: phi + mu = {phi_s[k] + mu[k]:.6g} exceeds Q = {q_s[k]:.6g} "
                f"at state {np.asarray(states)[k].tolist()}"
            )
        p = cont
        if self.qlocs.size:
            p = np.where(hit, np.where(mark == OTHER, 0.0, self.ratio[idx]), p)
        return np.where(mark == ZETA, 1.0, p)

    def mu(self, comp: int, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        return np.asarray(self.spec.mu[comp](states), dtype=float) * np.ones(states.shape[:-1])

    # -- marked law used by the coupling -------------------------------------

    def draw_marked(self, ages: np.ndarray, rng: np.random.Generator):
        """Next proposal after ``ages`` with a mark: ``ZETA`` w.p. the ``phi`` share."""
        s = self.propose(ages, rng)
        hit, _ = self.atom_index(s)
        mark = np.where(rng.random(s.shape) < self.zeta_prob(s), ZETA, OTHER)
        return s, mark, hit

    def marked_density(self, ages, s, mark, atom) -> np.ndarray:
        """Density of ``(s, mark)`` against Lebesgue plus counting measure on atoms."""
        ages = np.asarray(ages, dtype=float)
        s = np.asarray(s, dtype=float)
        fin = np.isfinite(s) & (s >= ages)
        ss = np.where(fin, s, ages)
        base = np.asarray(self.Q.total_hazard(ages), dtype=float)
        phi_s, q_s = self._cont(ss)
        surv = np.exp(-(np.asarray(self.Q.total_hazard(ss), dtype=float) - base))
        cont = np.where(mark == ZETA, phi_s, q_s - phi_s) * surv
        out = np.where(atom, 0.0, cont)
        if self.qlocs.size and np.any(atom):
            hit, idx = self.atom_index(ss, ATOM_SNAP)
            # survival just before the atom
            sa = np.where(hit, self.qlocs[idx], ss)
            left = np.asarray(self.Q.cumulative_hazard(sa)) + np.asarray(self.Q.atom_hazard(sa, inclusive=False))
            before = np.exp(-(left - base))
            jump = np.where(mark == ZETA, self.zeta_mass[idx], self.other_mass[idx])
            out = np.where(atom, np.where(hit, before * jump, 0.0), out)
        return np.where(fin, np.maximum(out, 0.0), 0.0)

    def snap(self, s: np.ndarray, atom: np.ndarray) -> np.ndarray:
        if not self.qlocs.size:
            return s
        hit, idx = self.atom_index(s, ATOM_SNAP)
        return np.where(atom & hit, self.qlocs[idx], s)

    def coupled_marked(self, a: np.ndarray, ahat: np.ndarray, rng: np.random.Generator):
        """Maximal coupling of the marked next-proposal laws at elapsed ``a`` and ``ahat``.

        Returns proposal elapsed times and marks for both copies plus a flag
        telling whether the two offsets and marks coincide.
        """
        a = np.asarray(a, dtype=float)
        ahat = np.asarray(ahat, dtype=float)
        s0, m0, at0 = self.draw_marked(a, rng)
        x = s0 - a
        u = rng.random(a.shape)
        p = self.marked_density(a, s0, m0, at0)
        q = self.marked_density(ahat, ahat + x, m0, at0)
        same = np.isfinite(x) & (u * p <= q)
        s1 = self.snap(ahat + x, at0)
        m1 = m0.copy()
        todo = np.flatnonzero(~same)
        for _ in range(REJECTION_ROUNDS):
            if todo.size == 0:
                break
            y, my, aty = self.draw_marked(ahat[todo], rng)
            off = y - ahat[todo]
            qy = self.marked_density(ahat[todo], y, my, aty)
            py = self.marked_density(a[todo], a[todo] + off, my, aty)
            ok = rng.random(todo.size) * qy > py
            s1[todo[ok]] = y[ok]
            m1[todo[ok]] = my[ok]
            todo = todo[~ok]
        else:
            raise CouplerConstructionError("rejection coupling did not terminate")
        return s0, m0, s1, m1, same


# ---------------------------------------------------------------------------
# single trajectory
# ---------------------------------------------------------------------------


@dataclass
class ProcessState:
    """Current time, elapsed times since last renewal and renewal counters."""

    t: float
    x: np.ndarray
    counts: np.ndarray = None
    event_log: list | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).copy()
        if self.counts is None:
            self.counts = np.zeros(self.x.size, dtype=np.int64)

    @classmethod
    def start(cls, ages: Sequence[float], log: bool = False) -> "ProcessState":
        return cls(0.0, np.asarray(ages, dtype=float), None, [] if log else None)

    def copy(self) -> "ProcessState":
        log = None if self.event_log is None else list(self.event_log)
        return ProcessState(self.t, self.x.copy(), self.counts.copy(), log)


def _next_event(state: ProcessState, kernel: Kernel, rng, limit: float):
    """Advance to the next accepted renewal before ``limit``.

    Returns ``(time, component, elapsed)`` or ``None`` if nothing is accepted
    by ``limit``; in both cases rejected proposals leave ages advancing.
    Proposals are redrawn for every component after each rejection, which
    is legitimate because the proposal streams are memoryless in this sense.
    """
    t = state.t
    ages = state.x.copy()
    m = ages.size
    for _ in range(EVENT_GUARD):
        s = kernel.propose(ages, rng)
        wait = s - ages
        j = int(np.argmin(wait))
        dt = float(wait[j])
        if not t + dt <= limit:
            return None
        t += dt
        ages = ages + dt
        ages[j] = s[j]
        mu = kernel.mu(j, ages[None, :])
        p = kernel.accept_prob(s[j : j + 1], np.array([PLAIN]), mu, ages[None, :], j)
        if rng.random() < p[0]:
            return t, j, ages
        state.t, state.x = t, ages.copy()
    raise RunawayIntensityError(f"more than {EVENT_GUARD} proposals without a renewal (m={m})")


def step(state: ProcessState, spec: ProcessSpec, rng: np.random.Generator, kernel: Kernel | None = None):
    """Advance ``state`` in place to the next renewal; return ``(state, (t, i))``."""
    kernel = kernel or Kernel(spec)
    res = _next_event(state, kernel, rng, math.inf)
    if res is None:
        state.x = np.full_like(state.x, math.inf)
        state.t = math.inf
        return state, (math.inf, -1)
    t, j, ages = res
    B = ages[j]
    ages[j] = 0.0
    state.t, state.x = t, ages
    state.counts[j] += 1
    if state.event_log is not None:
        state.event_log.append((t, j, B))
    return state, (t, j)


@dataclass
class SimulationTrace:
    """Events and elapsed-time snapshots of one trajectory."""

    events: list = field(default_factory=list)
    probes: np.ndarray = field(default_factory=lambda: np.empty(0))
    snapshots: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    state: ProcessState | None = None

    def rows(self, run_id: int = 0) -> Iterable[tuple]:
        items = [(t, 0, (run_id, t, j, "renewal", B)) for t, j, B in self.events]
        for p, snap in zip(self.probes, self.snapshots):
            items.extend((p, 1, (run_id, p, j, "probe", b)) for j, b in enumerate(snap))
        for _, _, row in sorted(items, key=lambda r: (r[0], r[1])):
            yield row


def simulate_until(
    state: ProcessState,
    spec: ProcessSpec,
    horizon: float,
    rng: np.random.Generator,
    probes: Sequence[float] = (),
    kernel: Kernel | None = None,
) -> SimulationTrace:
    """Simulate from ``state.t`` up to ``state.t + horizon`` recording probes.

    Probes are absolute times; the snapshot holds the elapsed times at the probe.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    kernel = kernel or Kernel(spec)
    end = state.t + horizon
    probes = np.sort(np.asarray([p for p in probes if state.t <= p <= end], dtype=float))
    snaps = np.empty((probes.size, state.x.size))
    trace = SimulationTrace(probes=probes, snapshots=snaps)
    if horizon == 0:
        snaps[:] = state.x
        trace.state = state
        return trace
    k = 0
    events = 0
    while True:
        before = ProcessState(state.t, state.x.copy(), state.counts)
        res = _next_event(state, kernel, rng, end)
        t_next = end if res is None else res[0]
        while k < probes.size and probes[k] < t_next:
            snaps[k] = before.x + (probes[k] - before.t)
            k += 1
        if res is None:
            state.x = before.x + (end - before.t)
            state.t = end
            break
        t, j, ages = res
        trace.events.append((t, j, float(ages[j])))
        ages[j] = 0.0
        state.t, state.x = t, ages
        state.counts[j] += 1
        if state.event_log is not None:
            state.event_log.append((t, j, trace.events[-1][2]))
        events += 1
        if events > EVENT_GUARD:
            raise RunawayIntensityError(f"event count exceeded {EVENT_GUARD}")
    while k < probes.size:
        snaps[k] = state.x - (end - probes[k])
        k += 1
    trace.state = state
    return trace


# ---------------------------------------------------------------------------
# many independent trajectories
# ---------------------------------------------------------------------------


@dataclass
class BatchResult:
    """Elapsed times at the probes, shape ``(runs, probes, m)``, and event counts."""

    probes: np.ndarray
    B: np.ndarray
    counts: np.ndarray

    def rows(self) -> Iterable[tuple]:
        for r in range(self.B.shape[0]):
            for k, p in enumerate(self.probes):
                for j in range(self.B.shape[2]):
                    yield (r, float(p), j, "probe", float(self.B[r, k, j]))


def _run_chunk(kernel: Kernel, ages0: np.ndarray, probes: np.ndarray, rng: np.random.Generator):
    n, m = ages0.shape
    L = -ages0.copy()
    S = kernel.propose(ages0, rng)
    P = L + S
    out = np.full((n, probes.size, m), np.nan)
    counts = np.zeros((n, m), dtype=np.int64)
    pidx = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool) if probes.size else np.zeros(n, dtype=bool)
    events = 0
    rows = np.arange(n)
    while active.any():
        idx = rows[active]
        j = np.argmin(P[idx], axis=1)
        tn = P[idx, j]
        while True:
            pi = pidx[idx]
            need = pi < probes.size
            need[need] = tn[need] > probes[pi[need]]
            if not need.any():
                break
            r = idx[need]
            out[r, pidx[r], :] = probes[pidx[r]][:, None] - L[r]
            pidx[r] += 1
        live = pidx[idx] < probes.size
        active[idx[~live]] = False
        idx, j, tn = idx[live], j[live], tn[live]
        if idx.size == 0:
            break
        s = S[idx, j]
        ages = tn[:, None] - L[idx]
        ages[np.arange(idx.size), j] = s
        mu = np.empty(idx.size)
        for i in range(m):
            sel = j == i
            if sel.any():
                mu[sel] = kernel.mu(i, ages[sel])
        p = np.empty(idx.size)
        for i in range(m):
            sel = j == i
            if sel.any():
                p[sel] = kernel.accept_prob(s[sel], np.zeros(sel.sum(), dtype=int), mu[sel], ages[sel], i)
        acc = rng.random(idx.size) < p
        L[idx[acc], j[acc]] = tn[acc]
        counts[idx[acc], j[acc]] += 1
        base = np.where(acc, 0.0, s)
        snew = kernel.propose(base, rng)
        S[idx, j] = snew
        P[idx, j] = L[idx, j] + snew
        events += idx.size
        if events > EVENT_GUARD * max(1, n // 1000):
            raise RunawayIntensityError(f"event count exceeded {EVENT_GUARD}")
    return out, counts


def _starts(starts, runs: int, m: int) -> np.ndarray:
    a = np.asarray(starts, dtype=float)
    if a.ndim == 1:
        a = np.broadcast_to(a, (runs, m))
    if a.shape != (runs, m):
        raise ValueError(f"starting states must have shape ({runs}, {m})")
    return np.array(a)


def simulate_batch(
    spec: ProcessSpec,
    starts,
    probes: Sequence[float],
    runs: int,
    seed: int = 0,
    stream_offset: int = 0,
) -> BatchResult:
    """Independent trajectories from ``starts`` sampled at ``probes``.

    Runs are processed in fixed blocks, block ``b`` using stream ``b + stream_offset``.
    """
    kernel = Kernel(spec)
    probes = np.asarray(sorted(probes), dtype=float)
    a = _starts(starts, runs, spec.m)
    B = np.empty((runs, probes.size, spec.m))
    counts = np.empty((runs, spec.m), dtype=np.int64)
    blocks = list(chunks(runs))
    work = fan_out(lambda key, lo, hi: _run_chunk(kernel, a[lo:hi], probes, stream(seed, key + stream_offset)), blocks)
    for (_, lo, hi), (out, c) in zip(blocks, work):
        B[lo:hi] = out
        counts[lo:hi] = c
    return BatchResult(probes, B, counts)


# ---------------------------------------------------------------------------
# coupled pairs
# ---------------------------------------------------------------------------


@dataclass
class PairedState:
    """Two copies sharing a clock, ``n`` independent pairs at once.

    Arrays indexed ``[pair, copy, component]``; copy 0 is ``X``, copy 1 is
    ``X_hat``. ``merged[pair, i]`` marks component pairs that share proposals.
    """

    kernel: Kernel
    theta: float
    horizon: float
    L: np.ndarray
    S: np.ndarray
    P: np.ndarray
    mark: np.ndarray
    coincide: np.ndarray
    merged: np.ndarray
    renewed: np.ndarray
    t: np.ndarray
    tau: np.ndarray
    epochs: np.ndarray
    attempts: np.ndarray
    first_condition: np.ndarray
    epochs_at_tau: np.ndarray
    epoch_records: list | None = None

    @classmethod
    def start(cls, spec: ProcessSpec, a, ahat, theta: float, horizon: float, rng, n: int = 1, records: bool = False, kernel=None):
        kernel = kernel or Kernel(spec)
        m = spec.m
        A = np.empty((n, 2, m))
        A[:, 0] = _starts(a, n, m)
        A[:, 1] = _starts(ahat, n, m)
        L = -A
        S = np.empty_like(A)
        S[:, 0] = kernel.propose(A[:, 0], rng)
        S[:, 1] = kernel.propose(A[:, 1], rng)
        same = np.all(A[:, 0] == A[:, 1], axis=1)
        S[same, 1] = S[same, 0]
        merged = np.repeat(same[:, None], m, axis=1)
        return cls(
            kernel,
            float(theta),
            float(horizon),
            L,
            S,
            L + S,
            np.zeros((n, 2, m), dtype=np.int8),
            np.zeros((n, m), dtype=bool),
            merged,
            np.zeros((n, 2, m), dtype=bool),
            np.zeros(n),
            np.where(same, 0.0, np.nan),
            np.zeros(n, dtype=np.int64),
            np.zeros(n, dtype=np.int64),
            np.full(n, -1, dtype=np.int8),
            np.zeros(n, dtype=np.int64),
            [] if records else None,
        )

    @property
    def coupled(self) -> np.ndarray:
        return ~np.isnan(self.tau)

    def advance(self, idx: np.ndarray, tn: np.ndarray, rng: np.random.Generator):
        """Process every proposal due at ``tn`` for the pairs ``idx``."""
        k = self.kernel
        m = self.L.shape[2]
        n = idx.size
        ar = np.arange(n)
        for i in range(m):
            due0 = self.P[idx, 0, i] == tn
            due1 = self.P[idx, 1, i] == tn
            u0 = rng.random(n)
            u1 = rng.random(n)
            if not (due0.any() or due1.any()):
                continue
            syn = self.merged[idx, i]
            u1 = np.where(syn, u0, u1)
            acc = []
            for c, due, u in ((0, due0, u0), (1, due1, u1)):
                a = np.zeros(n, dtype=bool)
                if due.any():
                    r = ar[due]
                    states = tn[r, None] - self.L[idx[r], c]
                    states[:, i] = self.S[idx[r], c, i]
                    mu = k.mu(i, states)
                    p = k.accept_prob(self.S[idx[r], c, i], self.mark[idx[r], c, i], mu, states, i)
                    a[r] = u[r] < p
                acc.append(a)
            acc0, acc1 = acc
            both = due0 & due1
            newsync = both & self.coincide[idx, i] & acc0 & acc1
            keep = syn & both & (acc0 == acc1)
            split = syn & both & (acc0 != acc1)
            for c, due, a in ((0, due0, acc0), (1, due1, acc1)):
                r = idx[a]
                self.L[r, c, i] = tn[a]
                self.renewed[r, c, i] = True
            shared = keep | newsync
            for c, due, a in ((0, due0, acc0), (1, due1, acc1)):
                own = due & ~(shared & (c == 1))
                if own.any():
                    r = idx[own]
                    base = np.where(a[own], 0.0, self.S[r, c, i])
                    s = k.propose(base, rng)
                    self.S[r, c, i] = s
                    self.P[r, c, i] = self.L[r, c, i] + s
                    self.mark[r, c, i] = PLAIN
            if shared.any():
                r = idx[shared]
                self.S[r, 1, i] = self.S[r, 0, i]
                self.P[r, 1, i] = self.P[r, 0, i]
                self.L[r, 1, i] = self.L[r, 0, i]
                self.mark[r, 1, i] = PLAIN
            self.coincide[idx[due0 | due1], i] = False
            self.merged[idx, i] = (syn & ~split) | newsync
        self.t[idx] = tn

        fresh = np.isnan(self.tau[idx]) & self.merged[idx].all(axis=1)
        self.tau[idx[fresh]] = tn[fresh]
        self.epochs_at_tau[idx[fresh]] = self.epochs[idx[fresh]]

        full = self.renewed[idx].all(axis=(1, 2))
        if not full.any():
            return
        r = idx[full]
        th = tn[full]
        self.renewed[r] = False
        ages = th[:, None, None] - self.L[r]
        cond = np.all(ages < self.theta, axis=(1, 2))
        first = self.epochs[r] == 0
        self.first_condition[r[first]] = cond[first]
        self.epochs[r] += 1
        go = cond & np.isnan(self.tau[r]) & (th <= self.horizon)
        self.attempts[r[go]] += 1
        if self.epoch_records is not None:
            for rr, t_, c_ in zip(r, th, cond):
                self.epoch_records.append((int(rr), float(t_), bool(c_), bool(c_ and np.isnan(self.tau[rr]))))
        for i in range(m):
            sel = go & ~self.merged[r, i]
            if not sel.any():
                continue
            rs = r[sel]
            s0, m0, s1, m1, same = k.coupled_marked(ages[sel, 0, i], ages[sel, 1, i], rng)
            self.S[rs, 0, i] = s0
            self.S[rs, 1, i] = s1
            self.P[rs, 0, i] = self.L[rs, 0, i] + s0
            self.P[rs, 1, i] = self.L[rs, 1, i] + s1
            # equal offsets from the common clock give equal absolute times
            self.P[rs[same], 1, i] = self.P[rs[same], 0, i]
            self.mark[rs, 0, i] = m0
            self.mark[rs, 1, i] = m1
            self.coincide[rs, i] = same


def coupled_step(pair: PairedState, spec: ProcessSpec, rng: np.random.Generator) -> PairedState:
    """Advance every not yet coupled pair to its next proposal time."""
    idx = np.flatnonzero(~pair.coupled)
    if idx.size == 0:
        return pair
    tn = pair.P[idx].reshape(idx.size, -1).min(axis=1)
    pair.advance(idx, tn, rng)
    return pair


@dataclass
class CoupledResult:
    """Coupling times and elapsed-time snapshots of both copies.

    ``tau`` is ``nan`` for censored pairs; ``B`` has shape ``(runs, probes, 2, m)``.
    """

    tau: np.ndarray
    censored: np.ndarray
    horizon: float
    probes: np.ndarray
    B: np.ndarray
    epochs: np.ndarray
    attempts: np.ndarray
    first_condition: np.ndarray
    epochs_at_tau: np.ndarray

    def first_attempt_success(self) -> np.ndarray:
        """Pairs meeting the threshold at the first epoch and coupled before the next."""
        return (self.first_condition == 1) & ~self.censored & (self.epochs_at_tau == 1)

    def tau_censored_at_horizon(self) -> np.ndarray:
        return np.where(self.censored, self.horizon, self.tau)

    def rows(self) -> Iterable[tuple]:
        for r in range(self.tau.size):
            t = self.horizon if self.censored[r] else self.tau[r]
            yield (r, float(t), -1, "censored" if self.censored[r] else "coupling", math.nan)
            for k, p in enumerate(self.probes):
                for c, name in ((0, "probe"), (1, "probe_hat")):
                    for j in range(self.B.shape[3]):
                        yield (r, float(p), j, name, float(self.B[r, k, c, j]))


def _coupled_chunk(kernel, a, ahat, theta, horizon, probes, n, rng):
    pair = PairedState.start(kernel.spec, a, ahat, theta, horizon, rng, n=n, kernel=kernel)
    m = kernel.spec.m
    out = np.full((n, probes.size, 2, m), np.nan)
    pidx = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    rows = np.arange(n)
    events = 0
    while active.any():
        idx = rows[active]
        tn = pair.P[idx].reshape(idx.size, -1).min(axis=1)
        while True:
            pi = pidx[idx]
            need = pi < probes.size
            need[need] = tn[need] > probes[pi[need]]
            if not need.any():
                break
            r = idx[need]
            out[r, pidx[r]] = probes[pidx[r]][:, None, None] - pair.L[r]
            pidx[r] += 1
        finished = (pidx[idx] >= probes.size) & (~np.isnan(pair.tau[idx]) | (tn > horizon))
        active[idx[finished]] = False
        idx, tn = idx[~finished], tn[~finished]
        if idx.size == 0:
            break
        pair.advance(idx, tn, rng)
        events += idx.size
        if events > EVENT_GUARD * max(1, n // 1000):
            raise RunawayIntensityError(f"event count exceeded {EVENT_GUARD}")
    censored = np.isnan(pair.tau) | (pair.tau > horizon)
    tau = np.where(censored, np.nan, pair.tau)
    return tau, censored, out, pair.epochs, pair.attempts, pair.first_condition, pair.epochs_at_tau


def simulate_coupled(
    spec: ProcessSpec,
    a,
    ahat,
    theta: float,
    runs: int,
    seed: int = 0,
    horizon: float | None = None,
    probes: Sequence[float] = (),
    stream_offset: int = 0,
) -> CoupledResult:
    """Run ``runs`` coupled pairs; each stops at coupling (or the horizon) and the last probe."""
    from .bounds import xi_bound

    kernel = Kernel(spec)
    if horizon is None:
        horizon = 1e3 * xi_bound(spec, 1.0)
    probes = np.asarray(sorted(probes), dtype=float)
    tau = np.empty(runs)
    cens = np.empty(runs, dtype=bool)
    B = np.empty((runs, probes.size, 2, spec.m))
    ep = np.empty(runs, dtype=np.int64)
    at = np.empty(runs, dtype=np.int64)
    fc = np.empty(runs, dtype=np.int8)
    et = np.empty(runs, dtype=np.int64)
    A = _starts(a, runs, spec.m)
    Ah = _starts(ahat, runs, spec.m)
    blocks = list(chunks(runs))

    def one(key, lo, hi):
        return _coupled_chunk(kernel, A[lo:hi], Ah[lo:hi], theta, horizon, probes, hi - lo, stream(seed, key + stream_offset))

    for (_, lo, hi), res in zip(blocks, fan_out(one, blocks)):
        tau[lo:hi], cens[lo:hi], B[lo:hi], ep[lo:hi], at[lo:hi], fc[lo:hi], et[lo:hi] = res
    return CoupledResult(tau, cens, float(horizon), probes, B, ep, at, fc, et)


@dataclass
class CouplingResult:
    tau: float
    censored: bool
    epochs: list


def coupling_epoch(
    a,
    ahat,
    spec: ProcessSpec,
    rng: np.random.Generator,
    theta: float,
    max_horizon: float | None = None,
) -> CouplingResult:
    """Coupling time of one pair started from elapsed times ``a`` and ``ahat``."""
    from .bounds import xi_bound

    if max_horizon is None:
        max_horizon = 1e3 * xi_bound(spec, 1.0)
    if not math.isfinite(max_horizon):
        raise ValueError("max_horizon must be finite")
    pair = PairedState.start(spec, a, ahat, theta, max_horizon, rng, n=1, records=True)
    while not pair.coupled[0]:
        tn = float(pair.P[0].min())
        if tn > max_horizon:
            return CouplingResult(math.nan, True, pair.epoch_records)
        pair.advance(np.array([0]), np.array([tn]), rng)
    tau = float(pair.tau[0])
    return CouplingResult(tau, False, pair.epoch_records)


def write_trace_csv(path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "t", "component", "event_type", "B"])
        for run, t, comp, kind, b in rows:
            w.writerow([run, repr(float(t)), comp, kind, repr(float(b))])
