"""Software model of CHERI-style capabilities.

A capability is a bounded, permissioned, tagged reference. Every memory
access in this package funnels through :func:`check_access`, which is the
single enforcement chokepoint. Illegal *derivation* silently clears the
tag (as the hardware does); illegal *dereference* raises :class:`CapFault`
(the software analogue of SIGPROT).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum, IntFlag, auto

# otype identifiers are a 32-bit namespace; the reserved maximum means
# "not sealed".
OTYPE_BITS = 32
UNSEALED = (1 << OTYPE_BITS) - 1

# Addresses are 64-bit.
ADDR_TOP = 1 << 64


class Perm(IntFlag):
    READ = 1 << 0
    WRITE = 1 << 1
    LOAD_CAP = 1 << 2
    STORE_CAP = 1 << 3
    SEAL = 1 << 4
    UNSEAL = 1 << 5


PERM_NONE = Perm(0)
PERM_RW = Perm.READ | Perm.WRITE
PERM_ALL = Perm.READ | Perm.WRITE | Perm.LOAD_CAP | Perm.STORE_CAP | Perm.SEAL | Perm.UNSEAL


class FaultKind(Enum):
    TAG_INVALID = auto()
    BOUNDS_VIOLATION = auto()
    PERMISSION_DENIED = auto()
    SEAL_VIOLATION = auto()
    ALIGNMENT_FAULT = auto()
    WRONG_OTYPE = auto()


class CapFault(Exception):
    """Raised when a capability check fails at dereference/seal time."""

    def __init__(self, kind: FaultKind, address: int, detail: str):
        super().__init__(f"{kind.name} at {address:#x}: {detail}")
        self.kind = kind
        self.address = address
        self.detail = detail


@dataclass(frozen=True, slots=True)
class Capability:
    """Immutable capability value.

    The cursor is the address a dereference would touch; it may sit
    outside [base, base+length) without faulting until actually used.
    """

    base: int
    length: int
    cursor: int
    perms: Perm
    tag: bool
    otype: int = UNSEALED

    @property
    def top(self) -> int:
        return self.base + self.length

    @property
    def sealed(self) -> bool:
        return self.otype != UNSEALED

    def has(self, perms: Perm) -> bool:
        return (self.perms & perms) == perms

    def __repr__(self) -> str:
        seal = f" otype={self.otype}" if self.sealed else ""
        tag = "+" if self.tag else "-"
        return (f"Cap[{tag}]({self.cursor:#x} in {self.base:#x}+{self.length:#x},"
                f" {self.perms!r}{seal})")


def null_capability(cursor: int = 0) -> Capability:
    """The untagged all-zeros pattern a forged integer decodes to."""
    return Capability(base=0, length=0, cursor=cursor, perms=PERM_NONE, tag=False)


def derive_bounds(parent: Capability, new_base: int, new_length: int) -> Capability:
    """Narrow a capability to [new_base, new_base+new_length).

    Any attempt to exceed the parent's range, derive from an untagged
    value, or derive from a sealed capability produces an untagged result
    rather than raising.
    """
    ok = (
        parent.tag
        and not parent.sealed
        and new_base >= parent.base
        and new_base + new_length <= parent.top
        and new_base + new_length < ADDR_TOP
    )
    return Capability(
        base=new_base,
        length=new_length,
        cursor=new_base,
        perms=parent.perms,
        tag=ok,
        otype=UNSEALED,
    )


def restrict_perms(parent: Capability, keep: Perm) -> Capability:
    """Intersect permissions; granting new ones is impossible by construction."""
    ok = parent.tag and not parent.sealed
    return replace(parent, perms=parent.perms & keep, tag=ok, otype=UNSEALED)


def with_cursor(cap: Capability, cursor: int) -> Capability:
    """Pointer arithmetic: move the cursor. Mutating a sealed value untags it."""
    ok = cap.tag and not cap.sealed
    return replace(cap, cursor=cursor, tag=ok)


def seal(target: Capability, authority: Capability) -> Capability:
    """Bind target to the otype selected by the authority's cursor.

    The sealed result is opaque: it cannot be dereferenced or modified
    until unsealed with a matching authority.
    """
    if not target.tag or not authority.tag:
        raise CapFault(FaultKind.TAG_INVALID, authority.cursor, "seal with untagged input")
    if target.sealed:
        raise CapFault(FaultKind.SEAL_VIOLATION, target.cursor, "target already sealed")
    if authority.sealed:
        raise CapFault(FaultKind.SEAL_VIOLATION, authority.cursor, "sealed authority")
    if not authority.has(Perm.SEAL):
        raise CapFault(FaultKind.PERMISSION_DENIED, authority.cursor, "authority lacks SEAL")
    otype = authority.cursor
    if not (authority.base <= otype < authority.top) or otype >= UNSEALED:
        raise CapFault(FaultKind.BOUNDS_VIOLATION, otype, "otype outside authority bounds")
    return replace(target, otype=otype)


def unseal(target: Capability, authority: Capability) -> Capability:
    """Restore a sealed capability, given the authority for its otype."""
    if not target.tag or not authority.tag:
        raise CapFault(FaultKind.TAG_INVALID, target.cursor, "unseal with untagged input")
    if authority.sealed:
        raise CapFault(FaultKind.SEAL_VIOLATION, authority.cursor, "sealed authority")
    if not authority.has(Perm.UNSEAL):
        raise CapFault(FaultKind.PERMISSION_DENIED, authority.cursor, "authority lacks UNSEAL")
    if not target.sealed:
        raise CapFault(FaultKind.SEAL_VIOLATION, target.cursor, "target is not sealed")
    if not (authority.base <= authority.cursor < authority.top):
        raise CapFault(FaultKind.BOUNDS_VIOLATION, authority.cursor,
                       "otype outside authority bounds")
    if authority.cursor != target.otype:
        raise CapFault(FaultKind.WRONG_OTYPE, target.cursor,
                       f"sealed with otype {target.otype}, authority selects {authority.cursor}")
    return replace(target, otype=UNSEALED)


def check_access(cap: Capability, width: int, need: Perm) -> None:
    """Validate one access of `width` bytes at the cursor, or raise.

    Check order is fixed (tag, seal, permission, bounds) so identical
    inputs always fault identically.
    """
    if not cap.tag:
        raise CapFault(FaultKind.TAG_INVALID, cap.cursor, "untagged capability")
    if cap.sealed:
        raise CapFault(FaultKind.SEAL_VIOLATION, cap.cursor,
                       f"sealed capability (otype {cap.otype})")
    if (cap.perms & need) != need:
        raise CapFault(FaultKind.PERMISSION_DENIED, cap.cursor,
                       f"need {need!r}, have {cap.perms!r}")
    if cap.cursor < cap.base or cap.cursor + width > cap.top:
        raise CapFault(FaultKind.BOUNDS_VIOLATION, cap.cursor,
                       f"access [{cap.cursor:#x},{cap.cursor + width:#x}) outside "
                       f"[{cap.base:#x},{cap.top:#x})")


def make_otype_authority(otype: int, perms: Perm = Perm.SEAL | Perm.UNSEAL) -> Capability:
    """Trusted-computing-base constructor for a sealing authority.

    Only trusted modules (the physical-space root issuer, the slicer, and
    the kernel interface) may call this; it is the software stand-in for
    the otype capabilities the kernel is born holding.
    """
    return Capability(base=otype, length=1, cursor=otype, perms=perms, tag=True)
