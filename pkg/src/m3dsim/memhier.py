"""Cache hierarchy and main-memory timing: private L1s, optional shared or
private L2, optional shared L3, a flat coherence directory, and a token-bucket
bandwidth model for main memory.

Caches are LRU, write-allocate, write-back, and non-blocking with unbounded
MSHRs: concurrency is limited by the pipeline (ROB/LSQ) and by memory
bandwidth, not by the caches. All state updates happen atomically at the
access cycle; latency is purely additive on top.
"""

import math
from dataclasses import dataclass, field

from .config import SystemConfig, derive_cycles

LINE = 64


class MemAccessError(ValueError):
    pass


@dataclass
class LevelCounters:
    read_hits: int = 0
    read_misses: int = 0
    write_hits: int = 0
    write_misses: int = 0
    writebacks: int = 0        # dirty lines pushed down from this level
    wb_received: int = 0       # writeback traffic arriving at this level
    invalidations: int = 0

    @property
    def accesses(self):
        return self.read_hits + self.read_misses + self.write_hits + self.write_misses

    @property
    def hits(self):
        return self.read_hits + self.write_hits

    @property
    def misses(self):
        return self.read_misses + self.write_misses


@dataclass
class MemHierStats:
    """Per-level counters plus aggregate latency/bandwidth accounting."""

    l1: LevelCounters = field(default_factory=LevelCounters)
    l2: LevelCounters = field(default_factory=LevelCounters)
    l3: LevelCounters = field(default_factory=LevelCounters)
    l2_present: bool = True
    l3_present: bool = False
    mem_reads: int = 0
    mem_writes: int = 0
    bytes_read: int = 0
    bytes_written: int = 0
    bw_stall_cycles: int = 0
    demand_accesses: int = 0
    total_demand_latency: int = 0
    invalidation_rounds: int = 0


@dataclass
class MemRequest:
    thread_id: int
    address: int
    kind: str
    issue_cycle: int
    completion_cycle: int
    served_by: str
    bw_stall: int = 0


class _Cache:
    """One cache instance: per-set insertion-ordered dicts give LRU."""

    __slots__ = ("sets", "n_sets", "assoc", "ctr")

    def __init__(self, n_sets, assoc):
        self.n_sets = n_sets
        self.assoc = assoc
        self.sets = [dict() for _ in range(n_sets)]

    def lookup(self, line, touch=True):
        s = self.sets[line & (self.n_sets - 1)]
        if line in s:
            if touch:
                dirty = s.pop(line)
                s[line] = dirty
            return True
        return False

    def insert(self, line, dirty=False):
        """Insert a line; returns (evicted_line, evicted_dirty) or None."""
        s = self.sets[line & (self.n_sets - 1)]
        if line in s:
            s[line] = s[line] or dirty
            return None
        victim = None
        if len(s) >= self.assoc:
            vline = next(iter(s))
            victim = (vline, s.pop(vline))
        s[line] = dirty
        return victim

    def set_dirty(self, line):
        s = self.sets[line & (self.n_sets - 1)]
        if line in s:
            s[line] = True

    def remove(self, line):
        """Drop a line (invalidation); returns True if it was dirty."""
        s = self.sets[line & (self.n_sets - 1)]
        return bool(s.pop(line, False))


class TokenBucket:
    """FCFS byte budget: `rate` bytes become deliverable every cycle."""

    __slots__ = ("rate", "served")

    def __init__(self, bytes_per_cycle):
        self.rate = bytes_per_cycle
        self.served = 0.0

    def request(self, nbytes, cycle):
        """Charge nbytes at `cycle`; returns queueing delay in cycles."""
        start = max(self.served, (cycle - 1) * self.rate)
        finish = start + nbytes
        self.served = finish
        return max(0, math.ceil(finish / self.rate) - cycle)


class MemoryHierarchy:
    """The full data-side memory system for one simulation."""

    def __init__(self, config: SystemConfig):
        self.config = config
        self.timing = derive_cycles(config)
        self.perfect = config.features.perfect_memory
        self.hops = config.noc_hop_cycles
        cores = config.core.cores
        self.stats = MemHierStats(l2_present=config.l2.present,
                                  l3_present=config.l3.present)

        self.l1 = [_Cache(config.l1.n_sets, config.l1.associativity)
                   for _ in range(cores)]
        self.l2 = None
        self.l2_private = None
        if config.l2.present:
            if config.l2.shared:
                self.l2 = _Cache(config.l2.n_sets, config.l2.associativity)
                # one access port per bank group of four cores
                self.n_banks = max(1, cores // 4)
                self.bank_free = [0] * self.n_banks
            else:
                self.l2_private = [_Cache(config.l2.n_sets, config.l2.associativity)
                                   for _ in range(cores)]
        self.l3 = _Cache(config.l3.n_sets, config.l3.associativity) \
            if config.l3.present else None

        self.bucket = TokenBucket(self.timing.bytes_per_cycle)
        # directory: line -> dict of core ids holding it (dict used as an
        # insertion-ordered set)
        self.directory = {}

    # -- helpers ------------------------------------------------------------

    def _mem_read(self, cycle):
        """Latency and accounting for one demand line fill from memory."""
        self.stats.mem_reads += 1
        self.stats.bytes_read += LINE
        delay = self.bucket.request(LINE, cycle)
        self.stats.bw_stall_cycles += delay
        return self.hops + self.timing.read_latency_cycles + delay, delay

    def _mem_write(self, cycle):
        """Writeback arriving at memory: bandwidth charged, off critical path."""
        self.stats.mem_writes += 1
        self.stats.bytes_written += LINE
        self.bucket.request(LINE, cycle)

    def _writeback(self, core, line, cycle, from_level):
        """Push a dirty line down from `from_level` ('l1'|'l2'|'l3')."""
        if from_level == "l1":
            self.stats.l1.writebacks += 1
            if self.l2 is not None or self.l2_private is not None:
                self.stats.l2.wb_received += 1
                cache = self.l2 if self.l2 is not None else self.l2_private[core]
                if cache.lookup(line, touch=False):
                    cache.set_dirty(line)
                else:
                    self._writeback(core, line, cycle, "l2")
                return
            self._mem_write(cycle)
        elif from_level == "l2":
            self.stats.l2.writebacks += 1
            if self.l3 is not None:
                self.stats.l3.wb_received += 1
                if self.l3.lookup(line, touch=False):
                    self.l3.set_dirty(line)
                else:
                    self._writeback(core, line, cycle, "l3")
                return
            self._mem_write(cycle)
        else:
            self.stats.l3.writebacks += 1
            self._mem_write(cycle)

    def _evict(self, core, victim, cycle, level):
        if victim is not None and victim[1]:
            self._writeback(core, victim[0], cycle, level)
        if victim is not None and level == "l1":
            # the core stays a directory holder while its private L2 keeps
            # the line
            if self.l2_private is None or not self.l2_private[core].lookup(
                    victim[0], touch=False):
                holders = self.directory.get(victim[0])
                if holders:
                    holders.pop(core, None)

    def _invalidate_sharers(self, core, line, cycle):
        """Write to a line held elsewhere: one invalidation round."""
        holders = self.directory.get(line)
        if not holders:
            return 0
        others = [c for c in holders if c != core]
        if not others:
            return 0
        for c in others:
            dirty = self.l1[c].remove(line)
            if self.l2_private is not None:
                dirty = self.l2_private[c].remove(line) or dirty
            if dirty:
                self._writeback(c, line, cycle, "l1")
            self.stats.l1.invalidations += 1
            holders.pop(c, None)
        self.stats.invalidation_rounds += 1
        return self.hops

    # -- the demand path ----------------------------------------------------

    def access(self, core: int, address: int, kind: str, cycle: int) -> MemRequest:
        """One demand access; returns the request with its completion cycle.

        Miss at a level charges that level's latency before descending;
        a memory access adds hop, memory, and bandwidth-queue latency.
        """
        if not isinstance(address, int) or address < 0:
            raise MemAccessError(f"address {address!r} is not line-alignable")
        if kind not in ("read", "write"):
            raise MemAccessError(f"bad access kind {kind!r}")

        if self.perfect:
            return MemRequest(core, address, kind, cycle, cycle + 1, "memory", 0)

        cfg = self.config
        line = address // LINE
        write = kind == "write"
        latency = cfg.l1.latency_cycles
        bw_stall = 0
        served = "l1"

        inval = self._invalidate_sharers(core, line, cycle) if write else 0

        if self.l1[core].lookup(line):
            if write:
                self.stats.l1.write_hits += 1
                self.l1[core].set_dirty(line)
            else:
                self.stats.l1.read_hits += 1
        else:
            if write:
                self.stats.l1.write_misses += 1
            else:
                self.stats.l1.read_misses += 1
            latency_below, bw_stall, served = self._fill_from_below(core, line, cycle)
            latency += latency_below
            self._evict(core, self.l1[core].insert(line, dirty=write), cycle, "l1")
            self.directory.setdefault(line, {})[core] = True
            if write:
                self.l1[core].set_dirty(line)

        latency += inval
        self.stats.demand_accesses += 1
        self.stats.total_demand_latency += latency
        return MemRequest(core, address, kind, cycle,
                          cycle + latency, served, bw_stall)

    def _fill_from_below(self, core, line, cycle):
        """L1 miss: probe L2/L3/memory; returns (extra latency, bw stall, server)."""
        cfg = self.config
        latency = 0
        if self.l2 is not None or self.l2_private is not None:
            latency += cfg.l2.latency_cycles
            if self.l2 is not None:
                bank = line % self.n_banks
                queue = max(0, self.bank_free[bank] - cycle)
                self.bank_free[bank] = max(self.bank_free[bank], cycle) + 1
                latency += queue
                cache = self.l2
            else:
                cache = self.l2_private[core]
            if cache.lookup(line):
                self.stats.l2.read_hits += 1
                return latency, 0, "l2"
            self.stats.l2.read_misses += 1
            below, stall, served = self._probe_l3_or_memory(core, line, cycle)
            self._evict(core, cache.insert(line), cycle, "l2")
            return latency + below, stall, served
        below, stall, served = self._probe_l3_or_memory(core, line, cycle)
        return latency + below, stall, served

    def _probe_l3_or_memory(self, core, line, cycle):
        cfg = self.config
        latency = 0
        if self.l3 is not None:
            latency += cfg.l3.latency_cycles
            if self.l3.lookup(line):
                self.stats.l3.read_hits += 1
                return latency, 0, "l3"
            self.stats.l3.read_misses += 1
            mem_lat, stall = self._mem_read(cycle)
            self._evict(core, self.l3.insert(line), cycle, "l3")
            return latency + mem_lat, stall, "memory"
        mem_lat, stall = self._mem_read(cycle)
        return latency + mem_lat, stall, "memory"

    def bandwidth_delay(self, nbytes: int, cycle: int) -> int:
        """Charge nbytes against the memory byte budget; returns extra cycles."""
        if self.perfect:
            return 0
        delay = self.bucket.request(nbytes, cycle)
        self.stats.bw_stall_cycles += delay
        return delay


# ---------------------------------------------------------------------------
# derived metrics
# ---------------------------------------------------------------------------

def amat(stats: MemHierStats) -> float:
    """Average memory access time over demand accesses, in cycles."""
    if stats.demand_accesses == 0:
        raise MemAccessError("AMAT undefined: no demand accesses")
    return stats.total_demand_latency / stats.demand_accesses


def lfmr(stats: MemHierStats) -> float:
    """Last-to-first miss ratio: LLC misses / L1 misses (1.0 with no L2/L3)."""
    l1_misses = stats.l1.misses
    if l1_misses == 0:
        raise MemAccessError("LFMR undefined: zero L1 misses")
    if stats.l3_present:
        return stats.l3.misses / l1_misses
    if stats.l2_present:
        return stats.l2.misses / l1_misses
    return 1.0
