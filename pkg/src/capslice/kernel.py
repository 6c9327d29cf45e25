"""The trusted side: device interface and e1000e kernel stub.

The kernel owns the root capabilities. Userspace gets exactly three
things from it: a sealed attach token, a slice table carved per the
registered manifests, and one privileged ioctl for rewriting descriptor
buffer addresses. Everything else is denied, and denials provably touch
neither the device nor DMA memory.

A conventional socket-style send/recv path also lives here; it is the
kernel-mediated baseline the bypass driver is benchmarked against, not
part of the token-gated interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from . import slicer
from .capability import (
    CapFault,
    Capability,
    Perm,
    PERM_RW,
    derive_bounds,
    make_otype_authority,
    restrict_perms,
    seal,
    unseal,
    with_cursor,
)
from .manifest import Manifest
from .nic import (
    DESC_DD,
    DESC_SIZE,
    NicModel,
    RCTL_EN,
    REG_RCTL,
    REG_RDBAH,
    REG_RDBAL,
    REG_RDH,
    REG_RDLEN,
    REG_RDT,
    REG_TCTL,
    REG_TDBAH,
    REG_TDBAL,
    REG_TDH,
    REG_TDLEN,
    REG_TDT,
    TCTL_EN,
    TX_CMD_EOP,
    TX_CMD_IFCS,
    TX_CMD_RS,
)
from .physmem import PhysSpace, RootAuthority

_INTERFACE_AUTHORITY = make_otype_authority(slicer.INTERFACE_OTYPE)

RING_SIZE = 64
BUF_SIZE = 2048

# Fixed layout of one device's DMA region. The shipped DMA manifest
# mirrors these offsets; test_kernel checks they agree.
DMA_TX_RING = 0x0000
DMA_RX_RING = 0x1000
DMA_TX_BUFS = 0x2000
DMA_RX_BUFS = DMA_TX_BUFS + RING_SIZE * BUF_SIZE
DMA_LENGTH = DMA_RX_BUFS + RING_SIZE * BUF_SIZE  # 0x42000


class ErrCode(Enum):
    DENIED = "denied"
    BUSY = "busy"
    NO_SUCH_DEVICE = "no such device"
    BAD_ARGUMENT = "bad argument"


class ApiError(Exception):
    """The only error type that crosses the kernel API boundary; raw
    capability faults never escape."""

    def __init__(self, code: ErrCode, detail: str = ""):
        super().__init__(f"{code.value}: {detail}" if detail else code.value)
        self.code = code


@dataclass
class DmaLayout:
    base: int

    @property
    def tx_ring(self) -> int:
        return self.base + DMA_TX_RING

    @property
    def rx_ring(self) -> int:
        return self.base + DMA_RX_RING

    def tx_buf(self, k: int) -> int:
        return self.base + DMA_TX_BUFS + k * BUF_SIZE

    def rx_buf(self, k: int) -> int:
        return self.base + DMA_RX_BUFS + k * BUF_SIZE

    @property
    def bufs_base(self) -> int:
        return self.base + DMA_TX_BUFS

    @property
    def bufs_end(self) -> int:
        return self.base + DMA_LENGTH


@dataclass
class AttachRecord:
    process_id: int
    device: str
    record_addr: int
    mapped: bool = False


@dataclass
class DeviceState:
    nic: NicModel
    bar_base: int
    bar_manifest: Manifest
    dma_manifest: Manifest
    mmio_root: Capability
    dma_root: Capability
    dma: DmaLayout
    # Kernel-side ring shadows for the socket path.
    tx_tail: int = 0
    tx_oldest: int = 0
    tx_inflight: int = 0
    rx_head: int = 0
    rx_tail: int = RING_SIZE - 1


class Kernel:
    """Interface + stub for one machine. Holds the root authority."""

    def __init__(self, space: PhysSpace, authority: RootAuthority,
                 priv_base: int, priv_length: int):
        self.space = space
        self._authority = authority
        self._priv_root = authority.issue_root(
            priv_base, priv_length,
            Perm.READ | Perm.WRITE | Perm.LOAD_CAP | Perm.STORE_CAP)
        self._alloc_next = priv_base
        self._alloc_end = priv_base + priv_length
        self._devices: dict[str, DeviceState] = {}
        self._records: dict[int, AttachRecord] = {}
        self._device_ids: dict[str, int] = {}
        self.invocations = 0

    # -- kernel-private allocator ---------------------------------------------

    def _alloc(self, size: int, align: int = 16) -> int:
        addr = (self._alloc_next + align - 1) // align * align
        if addr + size > self._alloc_end:
            raise ApiError(ErrCode.BUSY, "kernel memory exhausted")
        self._alloc_next = addr + size
        return addr

    def _priv_at(self, addr: int) -> Capability:
        return with_cursor(self._priv_root, addr)

    # -- stub: probe/attach ------------------------------------------------

    def stub_attach(self, name: str, nic: NicModel, bar_base: int,
                    bar_manifest: Manifest, dma_manifest: Manifest) -> None:
        """Bring the device up: allocate DMA memory, program and preload the
        rings, enable TX/RX, and register the manifests with the interface."""
        if name in self._devices:
            raise ApiError(ErrCode.BUSY, f"{name} already attached")
        if dma_manifest.bar_length != DMA_LENGTH:
            raise ApiError(ErrCode.BAD_ARGUMENT,
                           f"DMA manifest covers {dma_manifest.bar_length:#x},"
                           f" layout needs {DMA_LENGTH:#x}")

        mmio_root = self._authority.issue_root(bar_base, bar_manifest.bar_length, PERM_RW)
        dma_base = self._alloc(DMA_LENGTH, align=16)
        dma_root = self._authority.issue_root(dma_base, DMA_LENGTH, PERM_RW)
        dma = DmaLayout(dma_base)

        def reg(off: int, val: int) -> None:
            self.space.store(with_cursor(mmio_root, bar_base + off), 4, val)

        ring_bytes = RING_SIZE * DESC_SIZE
        reg(REG_TDBAL, dma.tx_ring & 0xFFFFFFFF)
        reg(REG_TDBAH, dma.tx_ring >> 32)
        reg(REG_TDLEN, ring_bytes)
        reg(REG_TDH, 0)
        reg(REG_TDT, 0)
        reg(REG_RDBAL, dma.rx_ring & 0xFFFFFFFF)
        reg(REG_RDBAH, dma.rx_ring >> 32)
        reg(REG_RDLEN, ring_bytes)
        reg(REG_RDH, 0)

        # Preprogram every descriptor to its paired buffer so the data
        # path never needs the kernel to fix addresses.
        for k in range(RING_SIZE):
            self.space.store(self._dma_at(dma_root, dma.tx_ring + k * DESC_SIZE), 8,
                             dma.tx_buf(k))
            self.space.store(self._dma_at(dma_root, dma.tx_ring + k * DESC_SIZE + 8), 8, 0)
            self.space.store(self._dma_at(dma_root, dma.rx_ring + k * DESC_SIZE), 8,
                             dma.rx_buf(k))
            self.space.store(self._dma_at(dma_root, dma.rx_ring + k * DESC_SIZE + 8), 8, 0)

        reg(REG_TCTL, TCTL_EN)
        reg(REG_RCTL, RCTL_EN)
        # Hand the device all but one RX descriptor (head == tail means empty).
        reg(REG_RDT, RING_SIZE - 1)

        self._device_ids[name] = len(self._device_ids) + 1
        self._devices[name] = DeviceState(
            nic=nic, bar_base=bar_base,
            bar_manifest=bar_manifest, dma_manifest=dma_manifest,
            mmio_root=mmio_root, dma_root=dma_root, dma=dma)

    @staticmethod
    def _dma_at(root: Capability, addr: int) -> Capability:
        return with_cursor(root, addr)

    def device(self, name: str) -> DeviceState:
        try:
            return self._devices[name]
        except KeyError:
            raise ApiError(ErrCode.NO_SUCH_DEVICE, name) from None

    # -- interface: token-gated entry points ---------------------------------

    def attach(self, process_id: int, device: str = "e1000e") -> Capability:
        """Mint a sealed attach token bound to {process, device}."""
        self.invocations += 1
        if device not in self._devices:
            raise ApiError(ErrCode.NO_SUCH_DEVICE, device)
        rec_addr = self._alloc(16, align=16)
        self.space.store(self._priv_at(rec_addr), 8, process_id)
        self.space.store(self._priv_at(rec_addr + 8), 8, self._device_ids[device])
        record_cap = restrict_perms(
            derive_bounds(self._priv_root, rec_addr, 16), Perm.READ)
        self._records[rec_addr] = AttachRecord(process_id, device, rec_addr)
        return seal(record_cap, _INTERFACE_AUTHORITY)

    def _verify_token(self, token: Capability) -> AttachRecord:
        try:
            opened = unseal(token, _INTERFACE_AUTHORITY)
        except CapFault as fault:
            raise ApiError(ErrCode.DENIED, f"bad token ({fault.kind.name})") from None
        record = self._records.get(opened.base)
        if record is None:
            raise ApiError(ErrCode.DENIED, "token matches no attach record")
        # Cross-check the in-memory record through the token's own capability.
        pid = self.space.load(with_cursor(opened, opened.base), 8)
        dev_id = self.space.load(with_cursor(opened, opened.base + 8), 8)
        if pid != record.process_id or dev_id != self._device_ids[record.device]:
            raise ApiError(ErrCode.DENIED, "attach record corrupted")
        return record

    def map_mmio(self, token: Capability) -> slicer.SliceTable:
        """Slice the register BAR and the DMA region for the token's holder.

        Exactly one mapping per attach; the unsealed roots never leave the
        kernel.
        """
        self.invocations += 1
        record = self._verify_token(token)
        if record.mapped:
            raise ApiError(ErrCode.DENIED, "already mapped once for this attach")
        dev = self._devices[record.device]
        regs_table = slicer.slice(dev.mmio_root, dev.bar_manifest)
        dma_table = slicer.slice(dev.dma_root, dev.dma_manifest)
        record.mapped = True
        return slicer.SliceTable(
            slices=regs_table.slices + dma_table.slices,
            sealed_root=regs_table.sealed_root,
            sealed_dma_root=dma_table.sealed_root)

    def ioctl_set_desc_addr(self, token: Capability, queue: str, index: int,
                            buf: Capability) -> None:
        """Privileged write of a descriptor's address field.

        The buffer capability must be tagged, unsealed, readable, and lie
        entirely inside the caller's DMA buffer region; anything else is
        denied with the descriptor untouched.
        """
        self.invocations += 1
        record = self._verify_token(token)
        dev = self._devices[record.device]
        if queue not in ("tx", "rx"):
            raise ApiError(ErrCode.BAD_ARGUMENT, f"queue {queue!r}")
        if not 0 <= index < RING_SIZE:
            raise ApiError(ErrCode.BAD_ARGUMENT, f"descriptor index {index}")
        if not buf.tag:
            raise ApiError(ErrCode.DENIED, "buffer capability is untagged")
        if buf.sealed:
            raise ApiError(ErrCode.DENIED, "buffer capability is sealed")
        if not buf.has(Perm.READ):
            raise ApiError(ErrCode.DENIED, "buffer capability lacks READ")
        if not (dev.dma.bufs_base <= buf.base and buf.top <= dev.dma.bufs_end):
            raise ApiError(ErrCode.DENIED, "buffer outside the DMA buffer region")
        ring = dev.dma.tx_ring if queue == "tx" else dev.dma.rx_ring
        self.space.store(self._dma_at(dev.dma_root, ring + index * DESC_SIZE), 8, buf.base)

    # -- mediated (socket-style) path; the baseline, not token-gated ---------

    def _charge_syscall_pair(self) -> None:
        self.space.advance(2 * self.space.costs.syscall_ns)

    def socket_send(self, device: str, frame: bytes) -> None:
        """Kernel-mediated transmit: two ring crossings plus one extra
        user-to-kernel payload copy, then the same ring work the bypass
        driver does, performed with the kernel roots."""
        self.invocations += 1
        dev = self.device(device)
        if len(frame) > BUF_SIZE:
            raise ApiError(ErrCode.BAD_ARGUMENT, f"frame of {len(frame)} bytes")
        self._charge_syscall_pair()
        self.space.advance(self.space.costs.copy_per_byte_ns * len(frame))

        while dev.tx_inflight > 0:
            desc = dev.dma.tx_ring + dev.tx_oldest * DESC_SIZE
            status = self.space.load(self._dma_at(dev.dma_root, desc + 12), 1)
            if not status & DESC_DD:
                break
            dev.tx_inflight -= 1
            dev.tx_oldest = (dev.tx_oldest + 1) % RING_SIZE
        if dev.tx_inflight == RING_SIZE:
            raise ApiError(ErrCode.BUSY, "transmit ring full")

        k = dev.tx_tail
        desc = dev.dma.tx_ring + k * DESC_SIZE
        self.space.store_bytes(self._dma_at(dev.dma_root, dev.dma.tx_buf(k)), frame)
        self.space.store(self._dma_at(dev.dma_root, desc + 8), 2, len(frame))
        self.space.store(self._dma_at(dev.dma_root, desc + 12), 1, 0)
        self.space.store(self._dma_at(dev.dma_root, desc + 11), 1,
                         TX_CMD_EOP | TX_CMD_IFCS | TX_CMD_RS)
        dev.tx_inflight += 1
        dev.tx_tail = (k + 1) % RING_SIZE
        self.space.store(with_cursor(dev.mmio_root, dev.bar_base + REG_TDT), 4, dev.tx_tail)

    def socket_recv(self, device: str) -> list[bytes]:
        """Kernel-mediated receive: drain completed RX descriptors.

        One datagram costs one receive call, so each returned payload is
        charged its own kernel entry/exit pair plus the extra
        kernel-to-user copy; an empty drain still pays for the call that
        found nothing.
        """
        self.invocations += 1
        dev = self.device(device)
        frames: list[bytes] = []
        while True:
            desc = dev.dma.rx_ring + dev.rx_head * DESC_SIZE
            status = self.space.load(self._dma_at(dev.dma_root, desc + 12), 1)
            if not status & DESC_DD:
                if not frames:
                    self._charge_syscall_pair()
                break
            self._charge_syscall_pair()
            length = self.space.load(self._dma_at(dev.dma_root, desc + 8), 2)
            data = self.space.load_bytes(
                self._dma_at(dev.dma_root, dev.dma.rx_buf(dev.rx_head)), length)
            self.space.advance(self.space.costs.copy_per_byte_ns * length)  # kernel->user
            self.space.store(self._dma_at(dev.dma_root, desc + 12), 1, status & ~DESC_DD)
            frames.append(data)
            dev.rx_head = (dev.rx_head + 1) % RING_SIZE
            dev.rx_tail = (dev.rx_tail + 1) % RING_SIZE
        if frames:
            self.space.store(with_cursor(dev.mmio_root, dev.bar_base + REG_RDT), 4,
                             dev.rx_tail)
        return frames
