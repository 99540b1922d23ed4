"""Dynamic µop traces: representation, synthetic generators, stats, file I/O.

Generators are pure in (profile, seed): the same profile always produces the
same per-thread µop sequences. Addresses are line-aligned 64-bit values in a
flat per-thread space (thread t owns addresses with bit 32+t set via a base
offset); sync variables live in a shared region above all thread spaces.
"""

import gzip
import math
import random
from dataclasses import dataclass, field

LINE = 64
N_REGS = 64

KINDS = ("int_alu", "fp", "complex", "load", "store", "branch", "sync")
SYNC_PRIMITIVES = ("tas_lock", "ticket_lock", "barrier", "atomic_counter")
WORKLOAD_CLASSES = ("streaming", "strided", "pointer_chase", "random_access",
                    "compute_loop", "branchy", "sync_heavy")

THREAD_SPACE = 1 << 32          # private address space per thread
SYNC_REGION_BASE = 1 << 48      # shared region for sync variables


class TraceError(ValueError):
    pass


@dataclass(slots=True)
class MicroOp:
    """One dynamic µop."""

    thread_id: int = 0
    kind: str = "int_alu"
    dst: int | None = None
    srcs: tuple = ()
    mem_addr: int | None = None
    mem_bytes: int | None = None
    branch_taken: bool | None = None
    branch_predictable: bool | None = None
    sync_primitive: str | None = None
    sync_var: int | None = None
    region_id: int | None = None

    def check(self):
        if self.kind not in KINDS:
            raise TraceError(f"unknown µop kind {self.kind!r}")
        if self.kind in ("load", "store") and (self.mem_addr is None or self.mem_bytes is None):
            raise TraceError(f"{self.kind} µop needs mem_addr and mem_bytes")
        if self.kind == "branch" and self.branch_taken is None:
            raise TraceError("branch µop needs branch_taken")
        if self.kind == "sync" and (self.sync_primitive is None or self.sync_var is None):
            raise TraceError("sync µop needs sync_primitive and sync_var")
        return self


@dataclass(frozen=True)
class WorkloadProfile:
    """Knobs for one synthetic workload class.

    The classes are stand-ins for the bandwidth-/latency-/compute-bound
    behaviors the studies sweep over; tests pick working sets and chain
    lengths to land in the metric regime they need.
    """

    klass: str = "streaming"
    instruction_count: int = 10000
    working_set_bytes: int = 1 << 20
    memory_op_fraction: float = 0.34
    dependency_chain_length: int = 4
    branch_fraction: float = 0.15
    mispredictable_branch_fraction: float = 0.3
    threads: int = 1
    sync_ops_per_thread: int = 64
    loop_body_length: int = 32
    seed: int = 1

    def validate(self):
        if self.klass not in WORKLOAD_CLASSES:
            raise TraceError(f"unknown workload class {self.klass!r}")
        for name in ("memory_op_fraction", "branch_fraction",
                     "mispredictable_branch_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise TraceError(f"{name} must be in [0,1]")
        if self.instruction_count <= 0 or self.threads <= 0:
            raise TraceError("counts must be > 0")
        if self.working_set_bytes < LINE:
            raise TraceError(f"working set smaller than one {LINE}-byte line")
        if self.dependency_chain_length < 1 or self.loop_body_length < 1:
            raise TraceError("chain and body lengths must be >= 1")
        return self


@dataclass
class TraceStats:
    """Measured properties of a trace (per-thread sequences combined)."""

    kind_counts: dict = field(default_factory=dict)
    instruction_count: int = 0
    distinct_lines: int = 0
    ilp_upper_bound: float = 1.0
    branch_fraction: float = 0.0


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _thread_base(tid):
    return tid * THREAD_SPACE


def _alu(tid, rng, dst=None, srcs=()):
    return MicroOp(thread_id=tid, kind="int_alu",
                   dst=dst if dst is not None else rng.randrange(N_REGS),
                   srcs=tuple(srcs))


def _gen_stream(profile, tid, rng, stride):
    ops = []
    base = _thread_base(tid)
    ws = (profile.working_set_bytes // LINE) * LINE
    addr = 0
    store_period = 4  # every 4th memory op writes
    mem_ops = 0
    acc = 0.0
    for i in range(profile.instruction_count):
        acc += profile.memory_op_fraction
        if acc >= 1.0:
            acc -= 1.0
            kind = "store" if (mem_ops % store_period == store_period - 1) else "load"
            ops.append(MicroOp(thread_id=tid, kind=kind,
                               dst=(i % N_REGS) if kind == "load" else None,
                               srcs=() if kind == "load" else ((i % N_REGS),),
                               mem_addr=base + addr, mem_bytes=8))
            addr = (addr + stride) % ws
            mem_ops += 1
        else:
            ops.append(_alu(tid, rng, dst=i % N_REGS))
    return ops


def _gen_pointer_chase(profile, tid, rng):
    # Each load's address is a pseudo-random permutation step and its source
    # register is the previous load's destination: a serial miss chain.
    ops = []
    base = _thread_base(tid)
    n_lines = max(1, profile.working_set_bytes // LINE)
    # multiplicative step coprime with n_lines gives a full-period walk
    step = 0
    while step == 0 or math.gcd(step, n_lines) != 1:
        step = rng.randrange(1, n_lines) if n_lines > 1 else 1
    line = rng.randrange(n_lines)
    prev_dst = None
    acc = 0.0
    for i in range(profile.instruction_count):
        acc += profile.memory_op_fraction if profile.memory_op_fraction > 0 else 1.0
        if acc >= 1.0:
            acc -= 1.0
            dst = i % N_REGS
            ops.append(MicroOp(thread_id=tid, kind="load", dst=dst,
                               srcs=(prev_dst,) if prev_dst is not None else (),
                               mem_addr=base + line * LINE, mem_bytes=8))
            prev_dst = dst
            line = (line + step) % n_lines
        else:
            ops.append(_alu(tid, rng, srcs=(prev_dst,) if prev_dst is not None else ()))
    return ops


def _gen_random_access(profile, tid, rng):
    ops = []
    base = _thread_base(tid)
    n_lines = max(1, profile.working_set_bytes // LINE)
    acc = 0.0
    for i in range(profile.instruction_count):
        acc += profile.memory_op_fraction
        if acc >= 1.0:
            acc -= 1.0
            ops.append(MicroOp(thread_id=tid, kind="load", dst=i % N_REGS,
                               mem_addr=base + rng.randrange(n_lines) * LINE,
                               mem_bytes=8))
        else:
            ops.append(_alu(tid, rng, dst=i % N_REGS))
    return ops


def _gen_compute_loop(profile, tid, rng):
    # Repeating loop body with region_id set, closed by a well-predicted
    # loop-back branch (the branch delimits region instances for the
    # memoization unit). The first dependency_chain_length body ops form one
    # serial accumulator chain (some of them loads from a cache-resident
    # array), the rest are independent, so the dataflow ILP upper bound lands
    # near body_length / chain_length.
    ops = []
    base = _thread_base(tid)
    body = max(2, profile.loop_body_length) - 1  # one slot for the loop branch
    chain = min(profile.dependency_chain_length, body)
    n_lines = max(1, profile.working_set_bytes // LINE)
    acc_reg = 0
    count = 0
    mem_acc = 0.0
    line = 0
    while count < profile.instruction_count:
        for j in range(body):
            if count >= profile.instruction_count:
                return ops
            if j < chain:
                mem_acc += profile.memory_op_fraction
                if mem_acc >= 1.0:
                    mem_acc -= 1.0
                    op = MicroOp(thread_id=tid, kind="load", dst=acc_reg,
                                 srcs=(acc_reg,), mem_addr=base + line * LINE,
                                 mem_bytes=8, region_id=0)
                    line = (line + 1) % n_lines
                else:
                    op = MicroOp(thread_id=tid, kind="int_alu", dst=acc_reg,
                                 srcs=(acc_reg,), region_id=0)
            else:
                op = MicroOp(thread_id=tid, kind="int_alu",
                             dst=1 + (j % (N_REGS - 1)), srcs=(), region_id=0)
            ops.append(op)
            count += 1
        ops.append(MicroOp(thread_id=tid, kind="branch", branch_taken=True,
                           branch_predictable=True))
        count += 1
    return ops


def _gen_branchy(profile, tid, rng):
    # Loop bodies containing branch sites; a fixed subset of sites is flagged
    # unpredictable (random outcome each iteration), the rest follow a stable
    # taken pattern a history predictor learns. Bodies carry region ids so
    # the memoization studies can gate them; the well-predicted loop-back
    # branch delimits the instances.
    ops = []
    base = _thread_base(tid)
    body = max(2, profile.loop_body_length) - 1
    n_lines = max(1, profile.working_set_bytes // LINE)
    branch_sites = max(1, round(body * profile.branch_fraction))
    site_positions = rng.sample(range(body), min(branch_sites, body))
    n_hard = round(len(site_positions) * profile.mispredictable_branch_fraction)
    hard_sites = set(sorted(site_positions)[:n_hard])
    site_positions = set(site_positions)
    mem_acc = 0.0
    count = 0
    line = 0
    while count < profile.instruction_count:
        for j in range(body):
            if count >= profile.instruction_count:
                return ops
            if j in site_positions:
                hard = j in hard_sites
                taken = rng.random() < 0.5 if hard else True
                ops.append(MicroOp(thread_id=tid, kind="branch",
                                   srcs=(j % N_REGS,), branch_taken=taken,
                                   branch_predictable=not hard, region_id=0))
            else:
                mem_acc += profile.memory_op_fraction
                if mem_acc >= 1.0:
                    mem_acc -= 1.0
                    ops.append(MicroOp(thread_id=tid, kind="load", dst=j % N_REGS,
                                       mem_addr=base + line * LINE, mem_bytes=8,
                                       region_id=0))
                    line = (line + 17) % n_lines
                else:
                    ops.append(MicroOp(thread_id=tid, kind="int_alu",
                                       dst=j % N_REGS, srcs=(), region_id=0))
            count += 1
        ops.append(MicroOp(thread_id=tid, kind="branch", branch_taken=True,
                           branch_predictable=True))
        count += 1
    return ops


def _gen_sync_heavy(profile, tid, rng):
    # Critical sections guarded by a TAS lock on shared variable 0:
    # acquire, CS body, release, then private work.
    ops = []
    cs_ops = max(1, profile.loop_body_length // 4)
    gap_ops = profile.loop_body_length
    iters = profile.sync_ops_per_thread // 2  # two sync ops per iteration
    count = 0
    for it in range(iters):
        ops.append(MicroOp(thread_id=tid, kind="sync",
                           sync_primitive="tas_lock", sync_var=0))
        for j in range(cs_ops):
            ops.append(_alu(tid, rng, dst=j % N_REGS))
        ops.append(MicroOp(thread_id=tid, kind="sync",
                           sync_primitive="tas_lock", sync_var=0))
        for j in range(gap_ops):
            ops.append(_alu(tid, rng, dst=j % N_REGS))
    # pad with private work; never truncate (a split critical section would
    # leave the lock held forever)
    while len(ops) < profile.instruction_count:
        ops.append(_alu(tid, rng, dst=len(ops) % N_REGS))
    return ops


def generate(profile: WorkloadProfile) -> list[list[MicroOp]]:
    """Generate one µop sequence per thread, deterministically from controls.

    Every class except sync_heavy emits exactly instruction_count µops per
    thread; sync_heavy emits at least that many (whole critical sections).
    """
    profile.validate()
    out = []
    for tid in range(profile.threads):
        rng = random.Random((profile.seed << 20) ^ (tid * 0x9E3779B1))
        if profile.klass == "streaming":
            ops = _gen_stream(profile, tid, rng, stride=LINE)
        elif profile.klass == "strided":
            ops = _gen_stream(profile, tid, rng, stride=4 * LINE)
        elif profile.klass == "pointer_chase":
            ops = _gen_pointer_chase(profile, tid, rng)
        elif profile.klass == "random_access":
            ops = _gen_random_access(profile, tid, rng)
        elif profile.klass == "compute_loop":
            ops = _gen_compute_loop(profile, tid, rng)
        elif profile.klass == "branchy":
            ops = _gen_branchy(profile, tid, rng)
        else:
            ops = _gen_sync_heavy(profile, tid, rng)
        out.append(ops)
    return out


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------

def measure(trace) -> TraceStats:
    """Compute kind counts, line footprint, branch fraction, and the dataflow
    ILP upper bound (instructions / register critical-path length).

    Accepts one thread's sequence or a list of per-thread sequences; the ILP
    bound uses the longest per-thread critical path.
    """
    threads = trace if trace and isinstance(trace[0], list) else [trace]
    if not any(threads):
        raise TraceError("cannot measure an empty trace")
    counts = {k: 0 for k in KINDS}
    lines = set()
    total = 0
    max_cp = 1
    for ops in threads:
        depth = {}  # reg -> critical-path length up to its last writer
        cp = 1
        for op in ops:
            counts[op.kind] += 1
            total += 1
            if op.mem_addr is not None:
                lines.add(op.mem_addr // LINE)
            d = 1 + max((depth.get(r, 0) for r in op.srcs), default=0)
            if op.dst is not None:
                depth[op.dst] = d
            if d > cp:
                cp = d
        max_cp = max(max_cp, cp)
    return TraceStats(
        kind_counts=counts,
        instruction_count=total,
        distinct_lines=len(lines),
        ilp_upper_bound=total / max_cp,
        branch_fraction=counts["branch"] / total,
    )


# ---------------------------------------------------------------------------
# file I/O
#
# One record per line, tab-separated:
#   tid kind dst src1 src2 addr bytes taken pred region sync_prim sync_var
# with `-` for absent fields. gzip if the path ends in .gz.
# ---------------------------------------------------------------------------

HEADER = "#m3dsim-trace v1"


def _fmt(value):
    if value is None:
        return "-"
    if value is True:
        return "1"
    if value is False:
        return "0"
    return str(value)


def _op_line(op: MicroOp) -> str:
    srcs = list(op.srcs) + [None, None]
    return "\t".join([
        str(op.thread_id), op.kind, _fmt(op.dst), _fmt(srcs[0]), _fmt(srcs[1]),
        _fmt(op.mem_addr), _fmt(op.mem_bytes), _fmt(op.branch_taken),
        _fmt(op.branch_predictable), _fmt(op.region_id),
        _fmt(op.sync_primitive), _fmt(op.sync_var),
    ])


def _parse_int(tok, lineno, what):
    if tok == "-":
        return None
    try:
        return int(tok)
    except ValueError:
        raise TraceError(f"line {lineno}: bad {what} {tok!r}") from None


def _parse_flag(tok, lineno, what):
    if tok == "-":
        return None
    if tok in ("0", "1"):
        return tok == "1"
    raise TraceError(f"line {lineno}: bad {what} {tok!r}")


def write_trace(trace, path):
    """Write per-thread sequences interleaved by thread id."""
    threads = trace if trace and isinstance(trace[0], list) else [trace]
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt") as fh:
        fh.write(HEADER + "\n")
        for ops in threads:
            for op in ops:
                fh.write(_op_line(op) + "\n")


def read_trace(path) -> list[list[MicroOp]]:
    """Read a trace file back into per-thread µop sequences."""
    opener = gzip.open if str(path).endswith(".gz") else open
    threads = {}
    with opener(path, "rt") as fh:
        first = fh.readline().rstrip("\n")
        if first != HEADER:
            raise TraceError(f"line 1: expected header {HEADER!r}")
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            toks = raw.split("\t")
            if len(toks) != 12:
                raise TraceError(f"line {lineno}: expected 12 fields, got {len(toks)}")
            kind = toks[1]
            if kind not in KINDS:
                raise TraceError(f"line {lineno}: unknown kind {kind!r}")
            prim = None if toks[10] == "-" else toks[10]
            if prim is not None and prim not in SYNC_PRIMITIVES:
                raise TraceError(f"line {lineno}: unknown sync primitive {prim!r}")
            srcs = tuple(s for s in (_parse_int(toks[3], lineno, "src1"),
                                     _parse_int(toks[4], lineno, "src2"))
                         if s is not None)
            op = MicroOp(
                thread_id=_parse_int(toks[0], lineno, "tid") or 0,
                kind=kind,
                dst=_parse_int(toks[2], lineno, "dst"),
                srcs=srcs,
                mem_addr=_parse_int(toks[5], lineno, "addr"),
                mem_bytes=_parse_int(toks[6], lineno, "bytes"),
                branch_taken=_parse_flag(toks[7], lineno, "taken"),
                branch_predictable=_parse_flag(toks[8], lineno, "pred"),
                region_id=_parse_int(toks[9], lineno, "region"),
                sync_primitive=prim,
                sync_var=_parse_int(toks[11], lineno, "sync_var"),
            ).check()
            threads.setdefault(op.thread_id, []).append(op)
    return [threads[t] for t in sorted(threads)]
