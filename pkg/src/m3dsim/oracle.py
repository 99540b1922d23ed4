"""Reference scheduler for small traces: an independent implementation of the
core timing contract using explicit per-cycle resource tables and a
first-touch memory latency rule. Used only by tests to validate simulate().

Preconditions: single thread, at most ORACLE_MAX_OPS µops, no branch or sync
µops, memoization off, and a memory system whose per-access latency is
state-trivial: either perfect_memory, or a hierarchy the trace cannot evict
from (per-set footprint within associativity at every level) with a
bandwidth budget wide enough that no request ever queues.
"""

import math

from .config import SystemConfig, derive_cycles

LINE = 64
ORACLE_MAX_OPS = 200

EXEC_LATENCY = {"int_alu": 1, "branch": 1, "fp": 4, "complex": 12}


class OracleError(ValueError):
    pass


def _check_preconditions(ops, config: SystemConfig):
    if len(ops) > ORACLE_MAX_OPS:
        raise OracleError(f"oracle bound is {ORACLE_MAX_OPS} µops")
    if any(op.kind in ("branch", "sync") for op in ops):
        raise OracleError("oracle handles traces without branches or sync µops")
    if config.features.memoization:
        raise OracleError("oracle requires memoization off")
    if config.features.perfect_memory:
        return
    timing = derive_cycles(config)
    if timing.bytes_per_cycle < config.core.width * LINE:
        raise OracleError("bandwidth budget too small: requests could queue")
    # no-eviction requirement per level
    lines = {op.mem_addr // LINE for op in ops if op.mem_addr is not None}
    for name in ("l1", "l2", "l3"):
        level = getattr(config, name)
        if not level.present:
            continue
        per_set = {}
        for ln in lines:
            s = ln % level.n_sets
            per_set[s] = per_set.get(s, 0) + 1
            if per_set[s] > level.associativity:
                raise OracleError(f"trace footprint would evict from {name}")


def oracle_cycles(ops, config: SystemConfig) -> int:
    """Exhaustively schedule the trace cycle by cycle; returns the cycle of
    the last retirement under the shared timing contract."""
    config.validate()
    if not ops:
        raise OracleError("empty trace")
    _check_preconditions(ops, config)

    core = config.core
    width = core.width
    depth = core.dispatch_depth_cycles
    if config.features.shallow_pipeline:
        depth = math.ceil(depth / 2)
    fill = core.frontend_depth_cycles + depth
    uops1 = config.features.uops_one_cycle
    perfect = config.features.perfect_memory
    timing = derive_cycles(config)

    n = len(ops)
    # producer of each source: index of the last older writer of that register
    producers = []
    last_writer = {}
    for i, op in enumerate(ops):
        producers.append(tuple(last_writer[r] for r in op.srcs if r in last_writer))
        if op.dst is not None:
            last_writer[op.dst] = i

    # first-touch memory latency rule
    cold_latency = config.l1.latency_cycles
    if config.l2.present:
        cold_latency += config.l2.latency_cycles
    if config.l3.present:
        cold_latency += config.l3.latency_cycles
    cold_latency += config.noc_hop_cycles + timing.read_latency_cycles
    warm_latency = config.l1.latency_cycles
    n_banks = max(1, core.cores // 4) if (config.l2.present and config.l2.shared) else 0

    if config.features.ideal_frontend:
        arrival = [1] * n
    else:
        arrival = [fill + i // width for i in range(n)]

    dispatched = [0] * n
    issued = [0] * n
    done = [0] * n
    retired = [False] * n
    next_dispatch = 0
    next_retire = 0
    lq = sq = 0
    rob = 0
    seen_lines = set()
    bank_free = {}

    cycle = 0
    guard = 0
    while next_retire < n:
        cycle += 1
        guard += 1
        if guard > 10_000_000:
            raise OracleError("oracle did not converge")

        # dispatch table: in order, width per cycle, ROB/LQ/SQ space
        slots = width
        while (next_dispatch < n and slots > 0 and rob < core.rob_entries
               and arrival[next_dispatch] <= cycle):
            op = ops[next_dispatch]
            if op.kind == "load" and lq >= core.lq_entries:
                break
            if op.kind == "store" and sq >= core.sq_entries:
                break
            if op.kind == "load":
                lq += 1
            elif op.kind == "store":
                sq += 1
            dispatched[next_dispatch] = cycle
            rob += 1
            next_dispatch += 1
            slots -= 1

        # issue table: oldest-first among ready µops, width and FU limits
        slots = width
        ints = fps = cxs = 0
        for i in range(next_retire, next_dispatch):
            if slots == 0:
                break
            if issued[i] or dispatched[i] == 0 or dispatched[i] >= cycle:
                continue
            if any(done[p] == 0 or done[p] >= cycle for p in producers[i]):
                continue
            kind = ops[i].kind
            if kind == "int_alu":
                if ints >= core.int_alus:
                    continue
                lat = 1
            elif kind == "fp":
                if fps >= core.fpus:
                    continue
                lat = 1 if uops1 else EXEC_LATENCY["fp"]
            elif kind == "complex":
                if cxs >= core.complex_alus:
                    continue
                lat = 1 if uops1 else EXEC_LATENCY["complex"]
            else:  # load / store
                if perfect:
                    lat = 1
                else:
                    line = ops[i].mem_addr // LINE
                    if line in seen_lines:
                        lat = warm_latency
                    else:
                        seen_lines.add(line)
                        lat = cold_latency
                        if n_banks:
                            bank = line % n_banks
                            free = bank_free.get(bank, 0)
                            lat += max(0, free - cycle)
                            bank_free[bank] = max(free, cycle) + 1
                    if n_banks and line in seen_lines and lat == warm_latency:
                        pass
            if kind == "int_alu":
                ints += 1
            elif kind == "fp":
                fps += 1
            elif kind == "complex":
                cxs += 1
            issued[i] = cycle
            done[i] = cycle + lat - 1
            slots -= 1

        # retire table: in order, width per cycle, completion this cycle allowed
        slots = width
        while (next_retire < n and slots > 0 and done[next_retire] != 0
               and done[next_retire] <= cycle):
            if ops[next_retire].kind == "load":
                lq -= 1
            elif ops[next_retire].kind == "store":
                sq -= 1
            retired[next_retire] = True
            rob -= 1
            next_retire += 1
            slots -= 1

    return cycle
