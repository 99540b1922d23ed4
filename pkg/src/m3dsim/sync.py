"""Inter-thread synchronization cost model.

Three modes:
  base - atomic read-modify-writes travel through the cache hierarchy and
         the coherence directory (sharers invalidated on write);
  opt  - idealized: only the planar NoC hop latency is paid;
  rf   - register-file-level synchronization: a fixed small latency of
         2 + ceil(sqrt(cores)) cycles, serializing FCFS on the target's
         extra register-file port. Falls back to base for variables beyond
         the provisioned slots.

Per-thread sync µops execute in program order (the core chains them); the
engine serializes cross-thread contention FCFS with lowest-thread-id
tie-break, so schedules are deterministic.
"""

import math
from dataclasses import dataclass

from .trace import SYNC_REGION_BASE, LINE

SYNC_MODES = ("base", "opt", "rf")


class SyncError(ValueError):
    pass


def rf_latency_cycles(cores: int) -> int:
    """Register-file delivery latency: port access plus planar hop term."""
    return 2 + math.ceil(math.sqrt(cores))


@dataclass(frozen=True)
class SyncModeConfig:
    mode: str = "base"
    rf_slots: int = 4
    strict: bool = False

    def validate(self):
        if self.mode not in SYNC_MODES:
            raise SyncError(f"unknown sync mode {self.mode!r}")
        if self.rf_slots < 1:
            raise SyncError("rf_slots must be >= 1")
        return self


@dataclass(frozen=True)
class SyncBenchSpec:
    primitive: str = "tas_lock"
    threads: int = 16
    critical_section_ops: int = 8
    iterations: int = 32

    def validate(self):
        from .trace import SYNC_PRIMITIVES
        if self.primitive not in SYNC_PRIMITIVES:
            raise SyncError(f"unknown primitive {self.primitive!r}")
        if self.threads < 1:
            raise SyncError("threads must be >= 1")
        return self


class _Lock:
    __slots__ = ("holder", "queue", "acq_done", "parity")

    def __init__(self):
        self.holder = None
        self.queue = []
        self.acq_done = 0
        self.parity = {}


class SyncEngine:
    """Grants completion cycles to sync µops; owns lock/barrier/counter state."""

    def __init__(self, config, mode: str, hier, n_threads: int,
                 mode_config: SyncModeConfig | None = None):
        mc = mode_config or SyncModeConfig(mode=mode)
        if mc.mode != mode:
            mc = SyncModeConfig(mode=mode, rf_slots=mc.rf_slots, strict=mc.strict)
        self.mc = mc.validate()
        self.mode = mode
        self.config = config
        self.hier = hier
        self.n_threads = n_threads
        self.cores = None
        self.locks = {}
        self.barriers = {}
        self.counters = {}
        self.intervals = []     # (var, core, acquire_done, release_done)
        self.retries = 0

    def attach(self, cores):
        self.cores = cores

    def effective_mode(self, var: int) -> str:
        if self.mode == "rf" and var >= self.mc.rf_slots:
            if self.mc.strict:
                raise SyncError(
                    f"sync variable {var} exceeds the {self.mc.rf_slots} "
                    "register-file slots (strict mode)")
            return "base"
        return self.mode

    def _latency(self, core_idx, var, cycle, mode):
        if mode == "base":
            addr = SYNC_REGION_BASE + var * LINE
            req = self.hier.access(core_idx, addr, "write", cycle)
            return max(1, req.completion_cycle - req.issue_cycle)
        if mode == "opt":
            return 1 + self.config.noc_hop_cycles
        return rf_latency_cycles(self.config.core.cores)

    def request(self, core_idx, seq, op, cycle):
        """A sync µop issued at `cycle`; returns its completion cycle, or
        None when it must wait for a grant (assigned later)."""
        var = op.sync_var
        mode = self.effective_mode(var)
        lat = self._latency(core_idx, var, cycle, mode)
        prim = op.sync_primitive
        if prim in ("tas_lock", "ticket_lock"):
            return self._lock_request(prim, var, core_idx, seq, cycle, lat, mode)
        if prim == "barrier":
            return self._barrier_request(var, core_idx, seq, cycle, lat)
        if prim == "atomic_counter":
            last = self.counters.get(var, 0)
            done = max(cycle + lat - 1, last + lat)
            self.counters[var] = done
            return done
        raise SyncError(f"unknown sync primitive {prim!r}")

    def _lock_request(self, prim, var, core_idx, seq, cycle, lat, mode):
        lock = self.locks.setdefault(var, _Lock())
        count = lock.parity.get(core_idx, 0)
        lock.parity[core_idx] = count + 1
        acquire = count % 2 == 0
        if acquire:
            if lock.holder is None and not lock.queue:
                lock.holder = core_idx
                lock.acq_done = cycle + lat - 1
                return lock.acq_done
            lock.queue.append((core_idx, seq, cycle, lat, prim))
            return None
        # release
        if lock.holder != core_idx:
            raise SyncError(
                f"thread {core_idx} releases lock {var} it does not hold")
        done = cycle + lat - 1
        self.intervals.append((var, core_idx, lock.acq_done, done))
        if lock.queue:
            nxt_core, nxt_seq, nxt_issue, nxt_lat, nxt_prim = lock.queue.pop(0)
            lock.holder = nxt_core
            grant = done + nxt_lat
            lock.acq_done = grant
            if nxt_prim == "tas_lock":
                waited = max(0, grant - (nxt_issue + nxt_lat - 1))
                spins = waited // max(1, nxt_lat)
                self.retries += spins
                if mode == "base" and spins:
                    self.hier.bucket.request(spins * LINE, cycle)
            self.cores[nxt_core].inject_completion(nxt_seq, grant, nxt_issue)
        else:
            lock.holder = None
        return done

    def _barrier_request(self, var, core_idx, seq, cycle, lat):
        arrivals = self.barriers.setdefault(var, [])
        arrivals.append((core_idx, seq, cycle, lat))
        if len(arrivals) < self.n_threads:
            return None
        last = max(a[2] for a in arrivals)
        own_done = None
        for c2, s2, iss2, lat2 in arrivals:
            done = last + lat2 - 1
            if c2 == core_idx and s2 == seq:
                own_done = done
            else:
                self.cores[c2].inject_completion(s2, done, iss2)
        self.barriers[var] = []
        return own_done


# ---------------------------------------------------------------------------
# primitive microbenchmarks
# ---------------------------------------------------------------------------

def build_bench_traces(spec: SyncBenchSpec, seed: int = 1):
    """Per-thread µop sequences for one primitive microbenchmark."""
    from .trace import MicroOp
    spec.validate()
    out = []
    for tid in range(spec.threads):
        ops = []
        for it in range(spec.iterations):
            if spec.primitive in ("tas_lock", "ticket_lock"):
                ops.append(MicroOp(thread_id=tid, kind="sync",
                                   sync_primitive=spec.primitive, sync_var=0))
                for j in range(spec.critical_section_ops):
                    ops.append(MicroOp(thread_id=tid, kind="int_alu",
                                       dst=j % 48, srcs=(j % 48,)))
                ops.append(MicroOp(thread_id=tid, kind="sync",
                                   sync_primitive=spec.primitive, sync_var=0))
                # small private gap between lock attempts, skewed per thread
                for j in range((tid * 3) % 5 + 2):
                    ops.append(MicroOp(thread_id=tid, kind="int_alu", dst=50))
            elif spec.primitive == "barrier":
                for j in range(spec.critical_section_ops + (tid * 5) % 11):
                    ops.append(MicroOp(thread_id=tid, kind="int_alu",
                                       dst=j % 48, srcs=(j % 48,)))
                ops.append(MicroOp(thread_id=tid, kind="sync",
                                   sync_primitive="barrier", sync_var=0))
            else:  # atomic_counter
                for j in range(spec.critical_section_ops):
                    ops.append(MicroOp(thread_id=tid, kind="int_alu",
                                       dst=j % 48, srcs=(j % 48,)))
                ops.append(MicroOp(thread_id=tid, kind="sync",
                                   sync_primitive="atomic_counter", sync_var=0))
        out.append(ops)
    return out


def run_sync_bench(spec: SyncBenchSpec, config, mode: str, seed: int = 1) -> dict:
    """Run one bench under `mode` and under base; report the speedup."""
    from .core import simulate
    if spec.threads > config.core.cores:
        raise SyncError(f"{spec.threads} threads exceed {config.core.cores} cores")
    traces = build_bench_traces(spec, seed)
    base = simulate(traces, config, sync_mode="base")
    if mode == "base":
        run = base
    else:
        run = simulate(traces, config, sync_mode=mode)
    return {
        "primitive": spec.primitive,
        "threads": spec.threads,
        "mode": mode,
        "cycles": run.cycles,
        "base_cycles": base.cycles,
        "speedup_vs_base": base.cycles / run.cycles,
        "sync_stall_cycles": run.sync["stall_cycles"],
    }
