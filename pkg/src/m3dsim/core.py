"""Cycle-stepped out-of-order core timing model.

Timing contract (cycles are 1-indexed; shared with the test oracle):

* Frontend: after a (re)start at cycle B, the µop at stream offset k can
  dispatch no earlier than B + P + k // width, where P is the pipeline fill
  (frontend depth + dispatch depth). At program start B = 0. A mispredicted
  branch resolving at cycle t restarts the stream behind it with B = t; the
  ideal frontend replaces the whole model with "dispatchable at t + 1".
* Dispatch: in order, up to `width` µops/cycle, blocked by ROB/LQ/SQ space
  and by an unresolved mispredicted branch (wrong-path work is modeled as
  the resulting bubbles, not as executed µops).
* Issue: a µop issues when all register sources have completed in an earlier
  cycle, an issue slot (≤ width/cycle) is free, and its functional-unit
  class has a free slot (int ALUs serve int_alu and branch µops; FPUs and
  complex ALUs serve fp and complex; loads, stores and sync µops need no
  unit). A µop dispatched in cycle c issues in cycle c+1 at the earliest.
* Latencies: int_alu/branch 1, fp 4, complex 12 (all pipelined; all 1 under
  uops_one_cycle); loads/stores take the memory-hierarchy latency; sync µops
  are granted by the synchronization engine. A µop issued at cycle t with
  latency L is retirable at t + L - 1 and its dependents can issue at t + L.
* Retire: in order, up to `width`/cycle, in the completion cycle at the
  earliest. The simulated cycle count is the cycle of the last retirement.
"""

import heapq
import math
from dataclasses import dataclass, field

from .config import SystemConfig
from .memhier import MemoryHierarchy, MemHierStats
from .memo import MemoUnit, MemoUnitConfig
from .predictors import make_predictor
from .sync import SyncEngine, SYNC_MODES

INF = float("inf")

EXEC_LATENCY = {"int_alu": 1, "branch": 1, "fp": 4, "complex": 12}

SLOT_KEYS = ("retiring", "frontend", "bad_speculation", "backend_core",
             "backend_mem_latency", "backend_mem_bandwidth")


class SimulationError(ValueError):
    pass


@dataclass
class SimResult:
    """Counters from one simulation run."""

    cycles: int
    width: int
    cores_used: int
    retired: list
    finish_cycles: list
    slots: dict
    branches_executed: int
    branches_mispredicted: int
    hier: MemHierStats
    memo: dict
    sync: dict
    gated_fraction: float
    config: SystemConfig

    @property
    def retired_total(self):
        return sum(self.retired)

    @property
    def total_slots(self):
        return self.cycles * self.width * self.cores_used

    @property
    def ipc(self):
        return self.retired_total / self.cycles if self.cycles else 0.0


class _Core:
    """Per-core pipeline state and phase logic."""

    def __init__(self, idx, ops, config: SystemConfig, hier, engine, memo_unit):
        self.idx = idx
        self.ops = ops
        self.n = len(ops)
        self.cfg = config
        core = config.core
        self.width = core.width
        self.rob_entries = core.rob_entries
        self.lq_entries = core.lq_entries
        self.sq_entries = core.sq_entries
        self.int_alus = core.int_alus
        self.fpus = core.fpus
        self.complex_alus = core.complex_alus
        self.uops1 = config.features.uops_one_cycle
        self.ideal_fe = config.features.ideal_frontend
        depth = core.dispatch_depth_cycles
        if config.features.shallow_pipeline:
            depth = math.ceil(depth / 2)
        self.fill = core.frontend_depth_cycles + depth
        self.hier = hier
        self.engine = engine
        self.memo = memo_unit
        self.predictor = make_predictor(core.predictor)

        # frontend stream position
        self.base_cycle = 1 if self.ideal_fe else self.fill
        self.base_index = 0
        self.next_i = 0
        self.floor_seq = -1
        self.floor_cycle = 0
        self.barrier_active = False
        self.pending_branch = -1
        self.bubble_until = 0

        # backend state
        self.rob = []           # deque-like list of seqs; head at rob_head
        self.rob_head = 0
        self.lq_used = 0
        self.sq_used = 0
        self.issued = bytearray(self.n)
        self.completed = bytearray(self.n)
        self.done_cycle = [0] * self.n
        self.pending = [0] * self.n
        self.waiters = {}
        self.last_writer = {}
        self.ready = []
        self.staged = []
        self.events = []
        self.bw_flag = {}
        self.gated = bytearray(self.n)
        self.last_sync = -1

        self.retired = 0
        self.finish_cycle = 0
        self.gated_retired = 0
        self.branches = 0
        self.mispredicts = 0
        self.sync_ops = 0
        self.sync_stall = 0
        self.slots = dict.fromkeys(SLOT_KEYS, 0)

    # -- frontend -----------------------------------------------------------

    def _arrival(self, i):
        if self.ideal_fe:
            a = self.base_cycle
        else:
            a = self.base_cycle + (i - self.base_index) // self.width
        if i == self.floor_seq:
            a = max(a, self.floor_cycle)
        return a

    def restart_fetch(self, resolve_cycle, gated_branch):
        if self.ideal_fe:
            penalty = 1
        elif gated_branch:
            penalty = 2
        else:
            penalty = self.fill
        self.base_cycle = resolve_cycle + penalty
        self.base_index = self.next_i
        self.barrier_active = False
        self.bubble_until = resolve_cycle + penalty

    def rob_len(self):
        return len(self.rob) - self.rob_head

    def dispatch(self, c):
        count = 0
        while (self.next_i < self.n and count < self.width
               and not self.barrier_active and self.rob_len() < self.rob_entries):
            i = self.next_i
            op = self.ops[i]
            if op.kind == "load" and self.lq_used >= self.lq_entries:
                break
            if op.kind == "store" and self.sq_used >= self.sq_entries:
                break
            if self.memo is not None:
                gate, floor = self.memo.on_dispatch(i, op, c)
                if gate:
                    self.gated[i] = 1
                if floor > c:
                    self.floor_seq = i
                    self.floor_cycle = floor
            if self._arrival(i) > c:
                break
            # committed: the µop enters the ROB this cycle
            self.rob.append(i)
            if op.kind == "load":
                self.lq_used += 1
            elif op.kind == "store":
                self.sq_used += 1
            n_pending = 0
            for reg in op.srcs:
                p = self.last_writer.get(reg)
                if p is not None and not self.completed[p]:
                    self.waiters.setdefault(p, []).append(i)
                    n_pending += 1
            if op.kind == "sync":
                # same-thread sync µops execute in program order
                p = self.last_sync
                if p >= 0 and not self.completed[p]:
                    self.waiters.setdefault(p, []).append(i)
                    n_pending += 1
                self.last_sync = i
            if op.dst is not None:
                self.last_writer[op.dst] = i
            self.pending[i] = n_pending
            if n_pending == 0:
                self.staged.append(i)
            if op.kind == "branch":
                self.branches += 1
                correct = self.predictor.predict_and_update(op)
                if not correct:
                    self.mispredicts += 1
                    self.barrier_active = True
                    self.pending_branch = i
            self.next_i = i + 1
            count += 1

    # -- backend ------------------------------------------------------------

    def issue(self, c):
        budget = self.width
        ints = fps = cxs = 0
        deferred = []
        while budget > 0 and self.ready:
            i = heapq.heappop(self.ready)
            op = self.ops[i]
            kind = op.kind
            if kind in ("int_alu", "branch"):
                if ints >= self.int_alus:
                    deferred.append(i)
                    continue
                ints += 1
                lat = 1
            elif kind == "fp":
                if fps >= self.fpus:
                    deferred.append(i)
                    continue
                fps += 1
                lat = 1 if self.uops1 else EXEC_LATENCY["fp"]
            elif kind == "complex":
                if cxs >= self.complex_alus:
                    deferred.append(i)
                    continue
                cxs += 1
                lat = 1 if self.uops1 else EXEC_LATENCY["complex"]
            elif kind in ("load", "store"):
                req = self.hier.access(self.idx, op.mem_addr,
                                       "read" if kind == "load" else "write", c)
                lat = max(1, req.completion_cycle - req.issue_cycle)
                if req.bw_stall > 0:
                    self.bw_flag[i] = True
            else:  # sync
                self.issued[i] = True
                self.sync_ops += 1
                budget -= 1
                done = self.engine.request(self.idx, i, op, c)
                if done is not None:
                    self.inject_completion(i, done, c)
                continue
            self.issued[i] = True
            budget -= 1
            done = c + lat - 1
            self.done_cycle[i] = done
            heapq.heappush(self.events, (done, i))
        for i in deferred:
            heapq.heappush(self.ready, i)

    def inject_completion(self, i, done, now):
        """Record the completion cycle of a deferred (sync) µop."""
        self.done_cycle[i] = done
        self.sync_stall += max(0, done - now)
        heapq.heappush(self.events, (done, i))

    def process_completions(self, c):
        while self.events and self.events[0][0] <= c:
            done, i = heapq.heappop(self.events)
            self.completed[i] = 1
            for w in self.waiters.pop(i, ()):
                self.pending[w] -= 1
                if self.pending[w] == 0:
                    heapq.heappush(self.ready, w)
            if i == self.pending_branch:
                self.pending_branch = -1
                self.restart_fetch(done, bool(self.gated[i]))

    def retire(self, c):
        cnt = 0
        while (self.rob_head < len(self.rob) and cnt < self.width
               and self.completed[self.rob[self.rob_head]]):
            i = self.rob[self.rob_head]
            self.rob_head += 1
            op = self.ops[i]
            if op.kind == "load":
                self.lq_used -= 1
            elif op.kind == "store":
                self.sq_used -= 1
            self.bw_flag.pop(i, None)
            if self.gated[i]:
                self.gated_retired += 1
            cnt += 1
        if self.rob_head > 65536:
            del self.rob[:self.rob_head]
            self.rob_head = 0
        self.retired += cnt
        if cnt:
            self.finish_cycle = c
        return cnt

    # -- accounting -----------------------------------------------------------

    def stall_class(self, c):
        """Attribute a non-retiring slot in cycle c to its cause."""
        if self.rob_head < len(self.rob):
            head = self.rob[self.rob_head]
            if self.issued[head] and not self.completed[head]:
                kind = self.ops[head].kind
                if kind in ("load", "store"):
                    return ("backend_mem_bandwidth" if self.bw_flag.get(head)
                            else "backend_mem_latency")
                if kind == "sync" and self.engine.effective_mode(
                        self.ops[head].sync_var) == "base":
                    return "backend_mem_latency"
            return "backend_core"
        if self.next_i >= self.n:
            return "frontend"
        if c <= self.bubble_until:
            return "bad_speculation"
        return "frontend"

    def account_cycle(self, c, retired_now):
        self.slots["retiring"] += retired_now
        left = self.width - retired_now
        if left:
            self.slots[self.stall_class(c)] += left

    def account_span(self, lo, hi):
        """Bulk slot accounting for idle cycles lo..hi inclusive."""
        span = hi - lo + 1
        if span <= 0:
            return
        if self.rob_head < len(self.rob) or self.next_i >= self.n:
            self.slots[self.stall_class(hi)] += span * self.width
            return
        bubbles = max(0, min(hi, self.bubble_until) - lo + 1)
        if bubbles:
            self.slots["bad_speculation"] += bubbles * self.width
        if span - bubbles:
            self.slots["frontend"] += (span - bubbles) * self.width

    def end_of_cycle(self):
        if self.staged:
            for i in self.staged:
                heapq.heappush(self.ready, i)
            self.staged.clear()

    def done(self):
        return self.retired >= self.n

    def next_activity(self, c):
        """Earliest cycle > c at which this core can make progress."""
        if self.done():
            return INF
        best = INF
        if self.events:
            best = self.events[0][0]
        if self.ready:
            best = min(best, c + 1)
        if self.rob_head < len(self.rob) and self.completed[self.rob[self.rob_head]]:
            best = min(best, c + 1)
        if (not self.barrier_active and self.next_i < self.n
                and self.rob_len() < self.rob_entries):
            op = self.ops[self.next_i]
            blocked = ((op.kind == "load" and self.lq_used >= self.lq_entries)
                       or (op.kind == "store" and self.sq_used >= self.sq_entries))
            if not blocked:
                best = min(best, max(c + 1, self._arrival(self.next_i)))
        return best


def simulate(traces, config: SystemConfig, sync_mode: str | None = None,
             memo_config: MemoUnitConfig | None = None) -> SimResult:
    """Run the per-thread µop sequences on the configured machine.

    Deterministic for identical inputs. `sync_mode` overrides the default
    synchronization mode (base, or rf when features.rf_sync is set).
    """
    if not traces or any(len(t) == 0 for t in traces):
        raise SimulationError("every thread needs a non-empty trace")
    if len(traces) > config.core.cores:
        raise SimulationError(
            f"{len(traces)} threads exceed {config.core.cores} cores")
    config.validate()
    if sync_mode is None:
        sync_mode = "rf" if config.features.rf_sync else "base"
    if sync_mode not in SYNC_MODES:
        raise SimulationError(f"unknown sync mode {sync_mode!r}")

    hier = MemoryHierarchy(config)
    engine = SyncEngine(config, sync_mode, hier, n_threads=len(traces))
    memo_cfg = memo_config or MemoUnitConfig()
    cores = []
    for idx, ops in enumerate(traces):
        mu = MemoUnit(memo_cfg, config, hier) if config.features.memoization else None
        cores.append(_Core(idx, ops, config, hier, engine, mu))
    engine.attach(cores)

    cycle = 0
    while True:
        if all(core.done() for core in cores):
            break
        nxt = min(core.next_activity(cycle) for core in cores)
        if nxt == INF:
            raise SimulationError(
                "simulation deadlock: no core can make progress "
                "(unbalanced sync operations in the trace?)")
        nxt = int(nxt)
        if nxt > cycle + 1:
            for core in cores:
                core.account_span(cycle + 1, nxt - 1)
        cycle = nxt
        for core in cores:
            core.dispatch(cycle)
        for core in cores:
            core.issue(cycle)
        for core in cores:
            core.process_completions(cycle)
        for core in cores:
            retired_now = core.retire(cycle)
            core.account_cycle(cycle, retired_now)
            core.end_of_cycle()

    for core in cores:
        if core.memo is not None:
            core.memo.close_instance()

    raw_cycles = cycle
    total_retired = sum(c.retired for c in cores)
    total_gated = sum(c.gated_retired for c in cores)
    g = total_gated / total_retired if total_retired else 0.0

    # renaming restriction of memoized schedules: charge the configured
    # penalty on the gated share of the execution
    final_cycles = raw_cycles
    if total_gated and config.features.memoization:
        final_cycles = math.ceil(raw_cycles * (1.0 + memo_cfg.renaming_penalty * g))
    extra = final_cycles - raw_cycles

    slots = dict.fromkeys(SLOT_KEYS, 0)
    for core in cores:
        for k in SLOT_KEYS:
            slots[k] += core.slots[k]
        slots["backend_core"] += extra * core.width

    scale = final_cycles / raw_cycles if raw_cycles else 1.0
    memo_stats = MemoUnit.aggregate([c.memo for c in cores if c.memo is not None])
    return SimResult(
        cycles=final_cycles,
        width=config.core.width,
        cores_used=len(traces),
        retired=[c.retired for c in cores],
        finish_cycles=[math.ceil(c.finish_cycle * scale) for c in cores],
        slots=slots,
        branches_executed=sum(c.branches for c in cores),
        branches_mispredicted=sum(c.mispredicts for c in cores),
        hier=hier.stats,
        memo=memo_stats,
        sync={"ops": sum(c.sync_ops for c in cores),
              "stall_cycles": sum(c.sync_stall for c in cores),
              "intervals": engine.intervals},
        gated_fraction=g,
        config=config,
    )
