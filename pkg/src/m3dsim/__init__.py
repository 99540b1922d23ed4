"""m3dsim: trace-driven cycle-level multicore simulator for 2D/3D/M3D
memory-technology design space exploration."""

from .config import (SystemConfig, CoreConfig, CacheLevelConfig, MemoryConfig,
                     FeatureToggles, DerivedTiming, ConfigError,
                     preset, load_config, serialize, derive_cycles, PRESET_NAMES)
from .trace import (MicroOp, WorkloadProfile, TraceStats, TraceError,
                    generate, measure, write_trace, read_trace)
from .memhier import MemoryHierarchy, MemHierStats, MemRequest, amat, lfmr
from .core import SimResult, SimulationError, simulate
from .oracle import oracle_cycles, OracleError
from .memo import MemoUnitConfig, MemoStats, epi_with_memo, baseline_memo_epi
from .sync import (SyncEngine, SyncModeConfig, SyncBenchSpec, SyncError,
                   rf_latency_cycles, run_sync_bench)
from .metrics import (TopDownBreakdown, EnergyReport, AreaLedger, MetricsError,
                      topdown, classify, energy, power_watts, area_ledger)

__version__ = "0.1.0"
