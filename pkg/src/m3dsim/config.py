"""Machine configuration: presets, validation, file loading, derived timing.

All experiments start from one of the named presets (``m3d``, ``3d``, ``2d``
and variants) and override fields from there. Configs are immutable after
construction and safe to share across concurrently running simulations.
"""

import json
import math
from dataclasses import dataclass, field, asdict, replace

LINE_BYTES = 64

MEMORY_TECHNOLOGIES = ("m3d_rram", "tsv3d_hbm", "ddr4", "m3d_sttmram")
PREDICTORS = ("two_level_gas", "tage_lite", "perfect", "static_taken")
PRESET_NAMES = ("m3d", "3d", "2d", "m3d_noL2", "m3d_revamp", "m3d_sttmram")


class ConfigError(ValueError):
    """Raised for unknown presets, schema violations, and invariant failures."""


@dataclass(frozen=True)
class MemoryConfig:
    """Main-memory technology point: latency, bandwidth, energy per bit."""

    read_latency_ns: float
    write_latency_ns: float
    bandwidth_GBps: float
    energy_read_pJ_per_bit: float
    energy_write_pJ_per_bit: float
    technology_label: str = "m3d_rram"

    def validate(self):
        if self.read_latency_ns <= 0 or self.write_latency_ns <= 0:
            raise ConfigError("memory latencies must be > 0")
        if self.bandwidth_GBps <= 0:
            raise ConfigError("memory.bandwidth_GBps must be > 0")
        if self.energy_read_pJ_per_bit < 0 or self.energy_write_pJ_per_bit < 0:
            raise ConfigError("memory energies must be >= 0")
        if self.technology_label not in MEMORY_TECHNOLOGIES:
            raise ConfigError(
                f"memory.technology_label {self.technology_label!r} not one of "
                f"{MEMORY_TECHNOLOGIES}")


@dataclass(frozen=True)
class CacheLevelConfig:
    """One cache level. `shared=True` means a single instance serves all cores;
    otherwise each core gets a private copy of this size."""

    present: bool = True
    shared: bool = False
    size_bytes: int = 32 * 1024
    associativity: int = 8
    latency_cycles: int = 4
    energy_hit_pJ: float = 15.0
    energy_miss_pJ: float = 33.0
    line_bytes: int = LINE_BYTES

    def validate(self, name="cache"):
        if not self.present:
            return
        unit = self.line_bytes * self.associativity
        if self.size_bytes <= 0 or self.size_bytes % unit != 0:
            raise ConfigError(
                f"{name}.size_bytes must be a multiple of line_bytes*associativity={unit}")
        sets = self.size_bytes // unit
        if sets & (sets - 1) != 0:
            raise ConfigError(f"{name}: set count {sets} is not a power of two")
        if self.latency_cycles < 1:
            raise ConfigError(f"{name}.latency_cycles must be >= 1")

    @property
    def n_sets(self):
        return self.size_bytes // (self.line_bytes * self.associativity)


@dataclass(frozen=True)
class CoreConfig:
    """Out-of-order core parameters shared by every core in the system."""

    cores: int = 64
    frequency_GHz: float = 4.0
    width: int = 4
    rob_entries: int = 128
    lq_entries: int = 32
    sq_entries: int = 32
    int_alus: int = 6
    fpus: int = 1
    complex_alus: int = 1
    frontend_depth_cycles: int = 6
    dispatch_depth_cycles: int = 6
    predictor: str = "two_level_gas"
    epi_core_nJ: float = 0.48
    # fraction of per-instruction core energy spent in fetch/decode/reorder,
    # the part a memoization unit can gate off
    frontend_energy_fraction: float = 0.48

    def validate(self):
        if self.cores < 1:
            raise ConfigError("core.cores must be >= 1")
        if self.width < 1:
            raise ConfigError("core.width must be >= 1")
        if self.rob_entries < self.width:
            raise ConfigError("rob >= width required")
        if self.lq_entries < 1 or self.sq_entries < 1:
            raise ConfigError("load/store queues must hold at least one entry")
        if min(self.int_alus, self.fpus, self.complex_alus) < 1:
            raise ConfigError("all functional-unit counts must be >= 1")
        if self.frontend_depth_cycles < 0 or self.dispatch_depth_cycles < 0:
            raise ConfigError("pipeline depths must be >= 0")
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"unknown predictor {self.predictor!r}; valid: {PREDICTORS}")
        if not 0.0 <= self.frontend_energy_fraction <= 1.0:
            raise ConfigError("frontend_energy_fraction must be in [0, 1]")
        if self.frequency_GHz <= 0:
            raise ConfigError("core.frequency_GHz must be > 0")


@dataclass(frozen=True)
class FeatureToggles:
    """Idealization and optimization switches used by the studies."""

    memoization: bool = False
    rf_sync: bool = False
    ideal_frontend: bool = False
    shallow_pipeline: bool = False
    perfect_memory: bool = False
    uops_one_cycle: bool = False
    mem_latency_multiplier: float = 1.0

    def validate(self):
        if self.mem_latency_multiplier <= 0:
            raise ConfigError("features.mem_latency_multiplier must be > 0")


@dataclass(frozen=True)
class SystemConfig:
    """Full machine description for one simulation."""

    core: CoreConfig
    l1: CacheLevelConfig
    l2: CacheLevelConfig
    l3: CacheLevelConfig
    memory: MemoryConfig
    noc_hop_cycles: int = 0
    features: FeatureToggles = field(default_factory=FeatureToggles)

    def validate(self):
        self.core.validate()
        self.memory.validate()
        self.features.validate()
        if not self.l1.present:
            raise ConfigError("L1 must always be present")
        self.l1.validate("l1")
        self.l2.validate("l2")
        self.l3.validate("l3")
        if self.l3.present and not self.l2.present:
            raise ConfigError("l3 present requires l2 present")
        if self.noc_hop_cycles < 0:
            raise ConfigError("noc_hop_cycles must be >= 0")
        return self


@dataclass(frozen=True)
class DerivedTiming:
    """Memory latencies in core cycles and the per-cycle byte budget."""

    read_latency_cycles: int
    write_latency_cycles: int
    bytes_per_cycle: float


def derive_cycles(config: SystemConfig) -> DerivedTiming:
    """Convert the memory technology point into cycles at the core frequency.

    Ceiling conversion: latency is never under-charged.
    """
    ghz = config.core.frequency_GHz
    mult = config.features.mem_latency_multiplier
    return DerivedTiming(
        read_latency_cycles=math.ceil(config.memory.read_latency_ns * ghz * mult),
        write_latency_cycles=math.ceil(config.memory.write_latency_ns * ghz * mult),
        bytes_per_cycle=config.memory.bandwidth_GBps / ghz,
    )


def default_hop_cycles(cores: int) -> int:
    """Mesh-of-trees hop count grows with the tree height, ~log2(cores)."""
    return math.ceil(math.log2(cores)) if cores > 1 else 0


_MEM_PRESETS = {
    "m3d": MemoryConfig(5.0, 13.0, 16000.0, 0.8, 0.11, "m3d_rram"),
    "3d": MemoryConfig(51.0, 55.0, 1500.0, 9.0, 9.0, "tsv3d_hbm"),
    "2d": MemoryConfig(65.0, 60.0, 102.0, 20.0, 20.0, "ddr4"),
}

L2_KB_PER_CORE = 256


def _l1(latency=4):
    return CacheLevelConfig(present=True, shared=False, size_bytes=32 * 1024,
                            associativity=8, latency_cycles=latency,
                            energy_hit_pJ=15.0, energy_miss_pJ=33.0)


def _l2(cores, shared=True):
    return CacheLevelConfig(present=True, shared=shared,
                            size_bytes=L2_KB_PER_CORE * 1024 * (cores if shared else 1),
                            associativity=8, latency_cycles=12,
                            energy_hit_pJ=46.0, energy_miss_pJ=93.0)


def _absent():
    return CacheLevelConfig(present=False)


def preset(name: str, cores: int = 64) -> SystemConfig:
    """Build one of the named system presets.

    `cores` scales the shared-L2 capacity (256 KB per core) and the default
    NoC hop count; everything else is fixed by the preset.
    """
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")
    hops = default_hop_cycles(cores)
    core = CoreConfig(cores=cores)

    if name in ("m3d", "m3d_noL2", "m3d_sttmram"):
        mem = _MEM_PRESETS["m3d"]
        if name == "m3d_sttmram":
            mem = replace(mem, read_latency_ns=mem.read_latency_ns / 2,
                          write_latency_ns=mem.write_latency_ns / 2,
                          technology_label="m3d_sttmram")
        l2 = _absent() if name == "m3d_noL2" else _l2(cores)
        cfg = SystemConfig(core=core, l1=_l1(), l2=l2, l3=_absent(),
                           memory=mem, noc_hop_cycles=hops)
    elif name == "3d":
        cfg = SystemConfig(core=replace(core, epi_core_nJ=1.5), l1=_l1(),
                           l2=_l2(cores), l3=_absent(),
                           memory=_MEM_PRESETS["3d"], noc_hop_cycles=hops)
    elif name == "2d":
        l3 = CacheLevelConfig(present=True, shared=True, size_bytes=8 * 1024 * 1024,
                              associativity=16, latency_cycles=27,
                              energy_hit_pJ=945.0, energy_miss_pJ=1904.0)
        cfg = SystemConfig(core=replace(core, epi_core_nJ=1.5), l1=_l1(),
                           l2=_l2(cores, shared=False), l3=l3,
                           memory=_MEM_PRESETS["2d"], noc_hop_cycles=hops)
    else:  # m3d_revamp
        # L2 removed, 8-wide with doubled queues and functional units,
        # L1 latency cut by the 3D-layout 41% (ceil(4 * 0.59) = 3),
        # memoization and register-file sync on.
        wide = replace(core, width=8, rob_entries=256, lq_entries=64, sq_entries=64,
                       int_alus=12, fpus=2, complex_alus=2)
        cfg = SystemConfig(core=wide, l1=_l1(latency=math.ceil(4 * 0.59)),
                           l2=_absent(), l3=_absent(),
                           memory=_MEM_PRESETS["m3d"], noc_hop_cycles=hops,
                           features=FeatureToggles(memoization=True, rf_sync=True))
    return cfg.validate()


# ---------------------------------------------------------------------------
# config file I/O
#
# Document model: JSON object with top-level keys `preset`, `core`, `l1`,
# `l2`, `l3`, `memory`, `noc_hop_cycles`, `features`. Unspecified fields take
# the preset's value (default preset: m3d). Unknown keys are an error.
# ---------------------------------------------------------------------------

_SECTION_TYPES = {
    "core": CoreConfig,
    "l1": CacheLevelConfig,
    "l2": CacheLevelConfig,
    "l3": CacheLevelConfig,
    "memory": MemoryConfig,
    "features": FeatureToggles,
}
_TOP_KEYS = set(_SECTION_TYPES) | {"preset", "noc_hop_cycles"}


def _merge_section(base, cls, overrides: dict, section: str):
    valid = {f for f in cls.__dataclass_fields__}
    for key in overrides:
        if key not in valid:
            raise ConfigError(f"unknown key {section}.{key}")
    try:
        return replace(base, **overrides)
    except TypeError as exc:
        raise ConfigError(f"bad value in section {section}: {exc}") from exc


def from_dict(doc: dict) -> SystemConfig:
    """Build a validated SystemConfig from a parsed config document."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    cores = doc.get("core", {}).get("cores") if isinstance(doc.get("core"), dict) else None
    base = preset(doc.get("preset", "m3d"), cores=cores if cores else 64)
    parts = {}
    for section, cls in _SECTION_TYPES.items():
        sub = doc.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"section {section} must be an object")
        parts[section] = _merge_section(getattr(base, section), cls, sub, section)
    hops = doc.get("noc_hop_cycles", base.noc_hop_cycles)
    if not isinstance(hops, int) or isinstance(hops, bool):
        raise ConfigError("noc_hop_cycles must be an integer")
    cfg = SystemConfig(core=parts["core"], l1=parts["l1"], l2=parts["l2"],
                       l3=parts["l3"], memory=parts["memory"],
                       noc_hop_cycles=hops, features=parts["features"])
    return cfg.validate()


def to_dict(config: SystemConfig) -> dict:
    return asdict(config)


def load_config(text_or_path) -> SystemConfig:
    """Parse a config document from a JSON string or a file path."""
    text = text_or_path
    if hasattr(text_or_path, "read_text"):
        text = text_or_path.read_text()
    elif isinstance(text_or_path, str) and text_or_path.lstrip()[:1] not in ("{", ""):
        with open(text_or_path) as fh:
            text = fh.read()
    if not str(text).strip():
        return preset("m3d")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc
    return from_dict(doc)


def serialize(config: SystemConfig) -> str:
    return json.dumps(to_dict(config), indent=2)
