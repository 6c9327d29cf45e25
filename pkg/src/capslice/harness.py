"""System builder, isolation suite, and virtual-time latency sweeps.

Two simulated machines (system-under-test and traffic peer), each with
its own physical space and clock, talk over a FrameLink. A discrete-event
loop orders frame deliveries and actor turns by (time, sequence), so runs
are exactly reproducible: the same configuration and seed produce
byte-identical CSV output.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Optional

from . import slicer
from .capability import CapFault, Capability, FaultKind, Perm, with_cursor
from .driver import Driver
from .kernel import ApiError, DMA_LENGTH, Kernel
from .manifest import Manifest, PermClass, expand, parse
from .netstack import UdpEndpoint, decode_udp, echo_reply, encode_udp
from .nic import BAR_LENGTH, FrameLink, NicModel
from .physmem import AccessCostTable, PhysSpace
from .slicer import AUDIT_READ, AUDIT_WRITE, SliceTable, audit_reachability

# One machine's physical layout: RAM low, the NIC BAR above it.
RAM_BASE = 0x0
RAM_LENGTH = 0x0010_0000
BAR_BASE = RAM_LENGTH
SPACE_SIZE = BAR_BASE + BAR_LENGTH

SUT_ENDPOINT = UdpEndpoint(mac=b"\x02\x00\x00\x00\x00\x01", ipv4=b"\x0a\x00\x00\x01", port=7)
PEER_ENDPOINT = UdpEndpoint(mac=b"\x02\x00\x00\x00\x00\x02", ipv4=b"\x0a\x00\x00\x02", port=40000)

MODE_BYPASS = "bypass"
MODE_MEDIATED = "mediated"


def data_manifest(name: str) -> Manifest:
    text = resources.files("capslice").joinpath("data", name).read_text(encoding="utf-8")
    return parse(text)


def default_manifests() -> tuple[Manifest, Manifest]:
    return data_manifest("e1000e.manifest"), data_manifest("e1000e-dma.manifest")


@dataclass
class Machine:
    name: str
    mode: str
    space: PhysSpace
    kernel: Kernel
    nic: NicModel
    driver: Driver
    endpoint: UdpEndpoint
    token: Optional[Capability] = None
    table: Optional[SliceTable] = None


def build_machine(name: str, mode: str, endpoint: UdpEndpoint,
                  costs: Optional[AccessCostTable] = None,
                  link: Optional[FrameLink] = None,
                  bar_manifest: Optional[Manifest] = None,
                  dma_manifest: Optional[Manifest] = None,
                  process_id: int = 1000) -> Machine:
    """One host: space, NIC, kernel stub, and a driver in the given mode."""
    if bar_manifest is None or dma_manifest is None:
        shipped_bar, shipped_dma = default_manifests()
        bar_manifest = bar_manifest or shipped_bar
        dma_manifest = dma_manifest or shipped_dma

    space, authority = PhysSpace.create(SPACE_SIZE, costs or AccessCostTable())
    space.add_region(RAM_BASE, RAM_LENGTH, name="ram")
    nic = NicModel(name=f"{name}-nic", mac=endpoint.mac)
    space.add_region(BAR_BASE, BAR_LENGTH, device=nic, name="bar")
    if link is not None:
        nic.connect(link)

    kernel = Kernel(space, authority, RAM_BASE, RAM_LENGTH)
    kernel.stub_attach("e1000e", nic, BAR_BASE, bar_manifest, dma_manifest)

    token = None
    table = None
    if mode == MODE_BYPASS:
        token = kernel.attach(process_id)
        table = kernel.map_mmio(token)
        driver = Driver(space, table=table)
    elif mode == MODE_MEDIATED:
        driver = Driver(space, kernel=kernel)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Machine(name, mode, space, kernel, nic, driver, endpoint, token, table)


# -- discrete-event loop -------------------------------------------------------


class EventLoop:
    """Events ordered by (time, insertion sequence); ties run in FIFO order."""

    def __init__(self):
        self._heap: list[tuple[float, int, Callable[[float], None]]] = []
        self._seq = 0
        self.executed = 0

    def schedule(self, time: float, fn: Callable[[float], None]) -> None:
        heapq.heappush(self._heap, (time, self._seq, fn))
        self._seq += 1

    def run(self, max_events: int = 10_000_000) -> None:
        while self._heap:
            t, _, fn = heapq.heappop(self._heap)
            fn(t)
            self.executed += 1
            if self.executed > max_events:
                raise RuntimeError("event budget exhausted; simulation is wedged")


class EchoServer:
    """System-under-test actor: echo every UDP frame back out."""

    def __init__(self, machine: Machine, loop: EventLoop):
        self.machine = machine
        self.loop = loop
        self._scheduled = False
        self.echoed = 0

    def on_frame(self, arrival: float) -> None:
        if not self._scheduled:
            self._scheduled = True
            self.loop.schedule(max(arrival, self.machine.space.clock), self._run)

    def _run(self, t: float) -> None:
        self._scheduled = False
        m = self.machine
        m.space.advance_to(t)
        if m.mode == MODE_BYPASS:
            frames = m.driver.poll_recv()
        else:
            frames = m.driver.mediated_recv()
        for frame in frames:
            reply = echo_reply(frame)
            if reply is None:
                continue
            if m.mode == MODE_BYPASS:
                m.driver.send(reply)
            else:
                m.driver.mediated_send(reply)
            self.echoed += 1


class LoadGenerator:
    """Peer actor: paced, windowed request stream with per-trial round
    trips stamped on the peer's own clock.

    The trial index rides in the UDP source port (the echo swaps ports),
    so replies match their requests even if intervening frames dropped.
    """

    MAX_TRIALS = 20000  # one source port per trial

    def __init__(self, machine: Machine, loop: EventLoop, payloads: list[bytes],
                 dst: UdpEndpoint, delay_ns: float, window: int):
        if len(payloads) > self.MAX_TRIALS:
            raise ValueError(f"at most {self.MAX_TRIALS} trials per cell")
        self.machine = machine
        self.loop = loop
        self.payloads = payloads
        self.dst = dst
        self.delay_ns = delay_ns
        self.window = window

        self.send_times: list[float] = []
        self.rtts: list[float] = []
        self.next_to_send = 0
        self.received = 0
        self.outstanding = 0
        self.mismatches = 0
        self._send_scheduled = False
        self._drain_scheduled = False

    def start(self) -> None:
        self._schedule_send(self.machine.space.clock)

    def _schedule_send(self, at: float) -> None:
        if self._send_scheduled or self.next_to_send >= len(self.payloads):
            return
        if self.outstanding >= self.window:
            return
        self._send_scheduled = True
        self.loop.schedule(at, self._send)

    def _send(self, t: float) -> None:
        self._send_scheduled = False
        m = self.machine
        m.space.advance_to(t)
        k = self.next_to_send
        src = replace(m.endpoint, port=m.endpoint.port + k)
        frame = encode_udp(src, self.dst, self.payloads[k])
        stamp = m.space.clock
        m.driver.send(frame)
        self.send_times.append(stamp)
        self.next_to_send = k + 1
        self.outstanding += 1
        self._schedule_send(max(m.space.clock, stamp + self.delay_ns))

    def on_frame(self, arrival: float) -> None:
        if not self._drain_scheduled:
            self._drain_scheduled = True
            self.loop.schedule(max(arrival, self.machine.space.clock), self._drain)

    def _drain(self, t: float) -> None:
        self._drain_scheduled = False
        m = self.machine
        m.space.advance_to(t)
        for frame in m.driver.poll_recv():
            try:
                _, dst_ep, payload = decode_udp(frame)
            except Exception:
                self.mismatches += 1
                continue
            k = dst_ep.port - m.endpoint.port
            if not (0 <= k < self.next_to_send) or payload != self.payloads[k]:
                self.mismatches += 1
                continue
            self.rtts.append(m.space.clock - self.send_times[k])
            self.received += 1
            self.outstanding -= 1
        if self.next_to_send < len(self.payloads):
            base = self.send_times[self.next_to_send - 1] if self.next_to_send else m.space.clock
            self._schedule_send(max(m.space.clock, base + self.delay_ns))


def wire_link(loop: EventLoop, link: FrameLink,
              actors: dict[int, tuple[Machine, object]]) -> None:
    """Route link transmissions into delivery events plus actor wakeups."""

    def on_transmit(dst: int, arrival: float, frame: bytes) -> None:
        machine, actor = actors[dst]

        def deliver(t: float) -> None:
            machine.nic.deliver_frame(machine.space, frame)
            actor.on_frame(t)

        loop.schedule(arrival, deliver)

    link.on_transmit = on_transmit


# -- latency sweep ---------------------------------------------------------------


@dataclass
class SweepConfig:
    packet_sizes: tuple[int, ...] = (1, 16, 64, 128, 256, 512, 1024, 1472)
    delays_us: tuple[int, ...] = (0, 100, 1000, 5000, 10000)
    trials: int = 1000
    modes: tuple[str, ...] = (MODE_BYPASS, MODE_MEDIATED)
    seed: int = 1
    costs: AccessCostTable = field(default_factory=AccessCostTable)
    link_ns: float = 1000.0
    wire_ns_per_byte: float = 8.0
    window: int = 32
    bar_manifest: Optional[Manifest] = None
    dma_manifest: Optional[Manifest] = None


@dataclass
class CellResult:
    mode: str
    packet_size: int
    delay_us: int
    trials: int
    p50_ns: float
    p99_ns: float
    drops: int
    sut_kernel_calls: int


def nearest_rank(sorted_values: list[float], p: float) -> float:
    if not sorted_values:
        return float("nan")
    k = max(1, math.ceil(p / 100.0 * len(sorted_values)))
    return sorted_values[k - 1]


def run_cell(cfg: SweepConfig, size: int, delay_us: int, mode: str) -> CellResult:
    rng = random.Random(f"{cfg.seed}:{mode}:{size}:{delay_us}")
    payloads = [rng.randbytes(size) for _ in range(cfg.trials)]

    link = FrameLink(delay_ns=cfg.link_ns, wire_ns_per_byte=cfg.wire_ns_per_byte)
    sut = build_machine("sut", mode, SUT_ENDPOINT, replace(cfg.costs), link,
                        cfg.bar_manifest, cfg.dma_manifest)
    peer = build_machine("peer", MODE_BYPASS, PEER_ENDPOINT, replace(cfg.costs), link,
                         cfg.bar_manifest, cfg.dma_manifest)

    loop = EventLoop()
    echo = EchoServer(sut, loop)
    gen = LoadGenerator(peer, loop, payloads, SUT_ENDPOINT,
                        delay_ns=delay_us * 1000.0, window=cfg.window)
    wire_link(loop, link, {0: (sut, echo), 1: (peer, gen)})

    kernel_calls_before = sut.kernel.invocations
    gen.start()
    loop.run(max_events=cfg.trials * 64 + 4096)

    if gen.mismatches:
        raise RuntimeError(f"{gen.mismatches} corrupted echoes in {mode}/{size}/{delay_us}")
    kernel_calls = sut.kernel.invocations - kernel_calls_before
    if mode == MODE_BYPASS and kernel_calls:
        raise RuntimeError(f"bypass cell made {kernel_calls} kernel calls")
    rtts = sorted(gen.rtts)
    return CellResult(
        mode=mode, packet_size=size, delay_us=delay_us, trials=cfg.trials,
        p50_ns=nearest_rank(rtts, 50), p99_ns=nearest_rank(rtts, 99),
        drops=cfg.trials - gen.received,
        sut_kernel_calls=kernel_calls)


@dataclass
class SweepResult:
    cells: list[CellResult]
    improvements: list[tuple[int, int, float]]  # (size, delay_us, improvement_pct)
    flagged: list[str]

    def improvement_for(self, size: int, delay_us: int) -> float:
        for s, d, pct in self.improvements:
            if s == size and d == delay_us:
                return pct
        raise KeyError((size, delay_us))


def run_sweep(cfg: SweepConfig) -> SweepResult:
    cells: list[CellResult] = []
    flagged: list[str] = []
    by_key: dict[tuple[str, int, int], CellResult] = {}
    for size in cfg.packet_sizes:
        for delay in cfg.delays_us:
            for mode in cfg.modes:
                cell = run_cell(cfg, size, delay, mode)
                cells.append(cell)
                by_key[(mode, size, delay)] = cell
                if cell.drops > 0.01 * cell.trials:
                    flagged.append(f"{mode} size={size} delay={delay}us: "
                                   f"{cell.drops}/{cell.trials} dropped")

    improvements: list[tuple[int, int, float]] = []
    if MODE_BYPASS in cfg.modes and MODE_MEDIATED in cfg.modes:
        for size in cfg.packet_sizes:
            for delay in cfg.delays_us:
                med = by_key[(MODE_MEDIATED, size, delay)].p99_ns
                byp = by_key[(MODE_BYPASS, size, delay)].p99_ns
                pct = 100.0 * (med - byp) / med if med else float("nan")
                improvements.append((size, delay, pct))
    return SweepResult(cells, improvements, flagged)


RESULTS_HEADER = "mode,packet_size,delay_us,trials,p50_ns,p99_ns,drops"
IMPROVEMENT_HEADER = "packet_size,delay_us,improvement_pct"


def results_csv(result: SweepResult) -> str:
    lines = [RESULTS_HEADER]
    for c in result.cells:
        lines.append(f"{c.mode},{c.packet_size},{c.delay_us},{c.trials},"
                     f"{c.p50_ns:.2f},{c.p99_ns:.2f},{c.drops}")
    return "\n".join(lines) + "\n"


def improvement_csv(result: SweepResult) -> str:
    lines = [IMPROVEMENT_HEADER]
    for size, delay, pct in result.improvements:
        lines.append(f"{size},{delay},{pct:.2f}")
    return "\n".join(lines) + "\n"


# -- isolation suite ----------------------------------------------------------------


def format_slice_line(name: str, cap: Capability) -> str:
    if cap.has(Perm.READ | Perm.WRITE):
        words = "Read+Write"
    elif cap.has(Perm.READ):
        words = "Read Only"
    elif cap.has(Perm.WRITE):
        words = "Write Only"
    else:
        words = "No Access"
    return f"{name}: {cap.cursor:#x}, len={cap.length}, {words}"


def normalize_slice_line(line: str) -> str:
    """Strip the mapping-dependent base; keep name, length, permissions."""
    head, _, rest = line.partition(": ")
    fields = [f.strip() for f in rest.split(",")]
    return f"{head}: " + ", ".join(f for f in fields if not f.startswith("0x"))


# What the documented four-register example must carve, bases aside.
EXAMPLE_SLICE_GOLDEN = [
    "CTRL: len=4, Read+Write",
    "STATUS: len=4, Read Only",
    "TDT: len=4, Read+Write",
]


def manifest_reach_oracle(m: Manifest, length: Optional[int] = None) -> bytearray:
    """Per-byte permission map recomputed straight from manifest expansion;
    the independent check against audit_reachability."""
    bits = bytearray(m.bar_length if length is None else length)
    for name, off, size, perm in expand(m):
        mask = 0
        if perm in (PermClass.RO, PermClass.RW):
            mask |= AUDIT_READ
        if perm is PermClass.RW:
            mask |= AUDIT_WRITE
        for b in range(off, min(off + size, len(bits))):
            bits[b] |= mask
    return bits


@dataclass
class Scenario:
    name: str
    passed: bool
    detail: str


@dataclass
class IsolationReport:
    scenarios: list[Scenario]
    slice_dump: list[str]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.scenarios)

    def render(self) -> str:
        lines = ["isolation suite", "==============="]
        for s in self.scenarios:
            lines.append(f"[{'PASS' if s.passed else 'FAIL'}] {s.name}: {s.detail}")
        lines.append("")
        lines.append("slice table")
        lines.append("-----------")
        lines.extend(self.slice_dump)
        return "\n".join(lines) + "\n"


def slice_standalone(m: Manifest) -> SliceTable:
    """Slice a manifest over a fresh single-region space (no device needed)."""
    space, authority = PhysSpace.create(m.bar_length)
    space.add_region(0, m.bar_length, name="aperture")
    root = authority.issue_root(0, m.bar_length, Perm.READ | Perm.WRITE)
    return slicer.slice(root, m)


def run_isolation_suite(bar_manifest: Optional[Manifest] = None,
                        dma_manifest: Optional[Manifest] = None) -> IsolationReport:
    shipped_bar, shipped_dma = default_manifests()
    bar_manifest = bar_manifest or shipped_bar
    dma_manifest = dma_manifest or shipped_dma

    scenarios: list[Scenario] = []

    def record(name: str, passed: bool, detail: str) -> None:
        scenarios.append(Scenario(name, passed, detail))

    # (a) The documented example manifest carves exactly the advertised
    # slices (lengths and permissions; bases are mapping-dependent).
    example = data_manifest("e1000e-example.manifest")
    table = slice_standalone(example)
    got = [normalize_slice_line(format_slice_line(n, c)) for n, c in table]
    record("example-slice-carving", got == EXAMPLE_SLICE_GOLDEN,
           f"{got}" if got != EXAMPLE_SLICE_GOLDEN else "3 slices, IMS withheld")

    # Full machine for the attack scenarios.
    link = FrameLink()
    m = build_machine("sut", MODE_BYPASS, SUT_ENDPOINT, link=link,
                      bar_manifest=bar_manifest, dma_manifest=dma_manifest)

    # (b) Offsetting from the writable control register into the
    # kernel-only interrupt mask must fault on bounds.
    ctrl = m.table.by_name("CTRL")
    probe = with_cursor(ctrl, ctrl.base + 0xD0)
    try:
        m.space.store(probe, 4, 42)
        record("offset-attack", False, "store unexpectedly succeeded")
    except CapFault as fault:
        ok = fault.kind is FaultKind.BOUNDS_VIOLATION and fault.address == ctrl.base + 0xD0
        record("offset-attack", ok, f"{fault.kind.name} at {fault.address:#x}")

    status_cap = m.table.by_name("STATUS")
    try:
        m.space.store(status_cap, 4, 0)
        record("readonly-status", False, "store unexpectedly succeeded")
    except CapFault as fault:
        record("readonly-status", fault.kind is FaultKind.PERMISSION_DENIED,
               fault.kind.name)

    record("ims-not-sliced", "IMS" not in m.table.names(), "kernel-only register withheld")

    # (c) No driver-held capability reaches a descriptor address field.
    dev = m.kernel.device("e1000e")
    target = dev.dma.tx_ring  # descriptor 0's address word
    holes = []
    for name, cap in m.table:
        try:
            m.space.store(with_cursor(cap, target), 8, dev.dma.bufs_base)
            holes.append(name)
        except CapFault:
            pass
    record("descriptor-addr-write-attack", not holes,
           "all slices fault" if not holes else f"writable through {holes}")

    # (d) Forged and wrong-type tokens are denied without device writes.
    before_writes = m.nic.counters.mmio_writes
    ring_bytes = bytes(m.space.data[dev.dma.base:dev.dma.base + DMA_LENGTH])
    forged = Capability(base=RAM_BASE, length=16, cursor=RAM_BASE,
                        perms=Perm.READ, tag=False, otype=slicer.INTERFACE_OTYPE)
    try:
        m.kernel.map_mmio(forged)
        record("forged-token", False, "mapping unexpectedly granted")
    except ApiError as err:
        unchanged = (m.nic.counters.mmio_writes == before_writes
                     and bytes(m.space.data[dev.dma.base:dev.dma.base + DMA_LENGTH]) == ring_bytes)
        record("forged-token", unchanged, f"{err.code.value}; device and DMA untouched")

    # (e) Exhaustive audit equals the manifest-expansion oracle.
    audited = audit_reachability(m.table, bar_manifest.bar_length)
    oracle = manifest_reach_oracle(bar_manifest)
    mismatches = sum(1 for a, b in zip(audited, oracle) if a != b)
    record("exhaustive-audit", mismatches == 0,
           f"{len(audited) * 2} (byte, perm) checks, {mismatches} mismatches")

    # (f) Same audit over the descriptor rings of the DMA aperture.
    dma_view = SliceTable(slices=m.table.slices, sealed_root=m.table.sealed_dma_root)
    ring_len = 0x1400  # both rings, including the gap between them
    ring_audit = audit_reachability(dma_view, ring_len)
    ring_oracle = manifest_reach_oracle(dma_manifest, ring_len)
    ring_mismatch = sum(1 for a, b in zip(ring_audit, ring_oracle) if a != b)
    record("ring-carve-audit", ring_mismatch == 0,
           f"{ring_len * 2} checks over the rings, {ring_mismatch} mismatches")

    dump = [format_slice_line(n, c) for n, c in m.table][:8]
    dump.append(f"... {len(m.table)} slices total")
    return IsolationReport(scenarios, dump)
