"""Top-down slot accounting, workload classification, energy accounting, and
the static area ledger.

Slot semantics: every simulated cycle provides `width` issue slots per active
core. A slot is `retiring` when a µop retires in it; otherwise it is charged
to the reason retirement could not use it: a misprediction bubble, a blocked
backend (core- or memory-side), or an empty frontend.
"""

from dataclasses import dataclass, field

from .memo import MemoUnitConfig

WORKLOAD_CATEGORIES = ("bandwidth_bound", "latency_bound", "compute_bound")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class TopDownBreakdown:
    """Percentages over all issue slots; the six fields sum to 100."""

    retiring: float
    frontend: float
    bad_speculation: float
    backend_core: float
    backend_mem_latency: float
    backend_mem_bandwidth: float

    def validate(self):
        total = (self.retiring + self.frontend + self.bad_speculation
                 + self.backend_core + self.backend_mem_latency
                 + self.backend_mem_bandwidth)
        if abs(total - 100.0) > 0.01:
            raise MetricsError(f"breakdown sums to {total}, expected 100")
        for name, v in self.as_dict().items():
            if not -1e-9 <= v <= 100.0 + 1e-9:
                raise MetricsError(f"{name} = {v} outside [0, 100]")
        return self

    def as_dict(self):
        return {
            "retiring": self.retiring,
            "frontend": self.frontend,
            "bad_speculation": self.bad_speculation,
            "backend_core": self.backend_core,
            "backend_mem_latency": self.backend_mem_latency,
            "backend_mem_bandwidth": self.backend_mem_bandwidth,
        }

    @property
    def backend_total(self):
        return (self.backend_core + self.backend_mem_latency
                + self.backend_mem_bandwidth)

    @property
    def memory_total(self):
        return self.backend_mem_latency + self.backend_mem_bandwidth

    @property
    def bandwidth_share(self):
        """Bandwidth-stall share of the memory-backend slots, in percent."""
        mem = self.memory_total
        return 100.0 * self.backend_mem_bandwidth / mem if mem > 0 else 0.0

    @classmethod
    def from_be_mem_bw(cls, be, mem, bw, retiring=None):
        """Construct a breakdown matching published (BE, Mem, BW) triples,
        where BW is the bandwidth share of memory-backend slots."""
        mem_bw = mem * bw / 100.0
        mem_lat = mem - mem_bw
        core = be - mem
        rest = 100.0 - be
        if retiring is None:
            retiring = rest
        fe = rest - retiring
        return cls(retiring=retiring, frontend=fe, bad_speculation=0.0,
                   backend_core=core, backend_mem_latency=mem_lat,
                   backend_mem_bandwidth=mem_bw).validate()


def topdown(result) -> TopDownBreakdown:
    """Slot-accounted breakdown of a SimResult."""
    if result.cycles <= 0:
        raise MetricsError("zero-cycle result")
    total = result.total_slots
    tally = sum(result.slots.values())
    if tally != total:
        raise MetricsError(
            f"slot conservation violated: {tally} != {total}")
    pct = {k: 100.0 * v / total for k, v in result.slots.items()}
    return TopDownBreakdown(
        retiring=pct["retiring"],
        frontend=pct["frontend"],
        bad_speculation=pct["bad_speculation"],
        backend_core=pct["backend_core"],
        backend_mem_latency=pct["backend_mem_latency"],
        backend_mem_bandwidth=pct["backend_mem_bandwidth"],
    ).validate()


def classify(breakdown: TopDownBreakdown) -> str:
    """Bandwidth-/latency-/compute-bound per the BE>40, Mem>40, BW>50 rule."""
    breakdown.validate()
    be = breakdown.backend_total
    mem = breakdown.memory_total
    bw = breakdown.bandwidth_share
    if be > 40.0 and mem > 40.0:
        return "bandwidth_bound" if bw > 50.0 else "latency_bound"
    return "compute_bound"


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    core_nJ: float
    l1_nJ: float
    l2_nJ: float
    l3_nJ: float
    memory_nJ: float
    mu_nJ: float
    total_nJ: float = 0.0
    shares: dict = field(default_factory=dict)

    def finalize(self):
        self.total_nJ = (self.core_nJ + self.l1_nJ + self.l2_nJ + self.l3_nJ
                         + self.memory_nJ + self.mu_nJ)
        t = self.total_nJ or 1.0
        self.shares = {
            "core": 100.0 * self.core_nJ / t,
            "l1": 100.0 * self.l1_nJ / t,
            "l2": 100.0 * self.l2_nJ / t,
            "l3": 100.0 * self.l3_nJ / t,
            "memory": 100.0 * self.memory_nJ / t,
            "mu": 100.0 * self.mu_nJ / t,
        }
        return self

    def as_dict(self):
        return {"core_nJ": self.core_nJ, "l1_nJ": self.l1_nJ,
                "l2_nJ": self.l2_nJ, "l3_nJ": self.l3_nJ,
                "memory_nJ": self.memory_nJ, "mu_nJ": self.mu_nJ,
                "total_nJ": self.total_nJ, "shares": self.shares}


def _cache_energy(counters, level_cfg):
    return (counters.hits * level_cfg.energy_hit_pJ
            + counters.misses * level_cfg.energy_miss_pJ) / 1000.0


def energy(result, config=None, memo_cfg: MemoUnitConfig | None = None) -> EnergyReport:
    """Energy split across core, caches, main memory, and the MU.

    Core energy is per retired µop, with the frontend share gated off for
    the memoized fraction; memory energy is per bit moved; EC traffic is
    charged to the MU, not double-counted under memory.
    """
    cfg = config or result.config
    mc = memo_cfg or MemoUnitConfig()
    g = result.gated_fraction
    core_nJ = (result.retired_total * cfg.core.epi_core_nJ
               * (1.0 - cfg.core.frontend_energy_fraction * g))
    h = result.hier
    l1 = _cache_energy(h.l1, cfg.l1)
    l2 = _cache_energy(h.l2, cfg.l2) if cfg.l2.present else 0.0
    l3 = _cache_energy(h.l3, cfg.l3) if cfg.l3.present else 0.0
    mem = (h.bytes_read * 8 * cfg.memory.energy_read_pJ_per_bit
           + h.bytes_written * 8 * cfg.memory.energy_write_pJ_per_bit) / 1000.0
    m = result.memo
    mu = 0.0
    if m and m.get("gated_instructions"):
        mu = (m["ec_bytes_read"] * 8 * cfg.memory.energy_read_pJ_per_bit
              + m["ec_bytes_written"] * 8 * cfg.memory.energy_write_pJ_per_bit) / 1000.0
        mu += m["gated_instructions"] * mc.buffer_access_nJ
    return EnergyReport(core_nJ=core_nJ, l1_nJ=l1, l2_nJ=l2, l3_nJ=l3,
                        memory_nJ=mem, mu_nJ=mu).finalize()


def power_watts(report: EnergyReport, cycles: int, frequency_GHz: float) -> float:
    """Average power: total energy over wall-clock time at the core clock."""
    if cycles <= 0:
        raise MetricsError("power undefined for zero cycles")
    seconds = cycles / (frequency_GHz * 1e9)
    return report.total_nJ * 1e-9 / seconds


# ---------------------------------------------------------------------------
# area
# ---------------------------------------------------------------------------

AREA_DELTAS = {
    "noL2": -32.0,
    "wide_pipeline": 19.0,
    "ec_buffer": 0.7,
    "rf_ports": 0.001,
}


@dataclass
class AreaLedger:
    entries: list
    total: float


def area_ledger(options) -> AreaLedger:
    """Logic-area deltas (percent) for the selected design changes."""
    entries = []
    for name in options:
        if name not in AREA_DELTAS:
            raise MetricsError(
                f"unknown area option {name!r}; valid: {sorted(AREA_DELTAS)}")
        entries.append((name, AREA_DELTAS[name]))
    return AreaLedger(entries=entries, total=sum(d for _, d in entries))
