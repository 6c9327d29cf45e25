"""Device manifests: the declarative register-map policy.

A manifest lists named byte ranges of a device aperture together with the
permission class each range is granted. The slicer turns a validated
manifest into capability slices; KERNEL ranges document privileged bytes
and block overlaps but never become userspace slices.

File format (UTF-8, one directive per line, `#` starts a comment):

    device <name>
    bar <hex-length>
    reg <name> <hex-offset> <dec-size> <RW|RO|KERNEL> [repeat=<count> stride=<hex>]
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

from .capability import PERM_NONE, PERM_RW, Perm


class PermClass(Enum):
    RW = "RW"
    RO = "RO"
    KERNEL = "KERNEL"

    def to_perms(self) -> Perm:
        if self is PermClass.RW:
            return PERM_RW
        if self is PermClass.RO:
            return Perm.READ
        return PERM_NONE


class ManifestError(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class Repeat:
    count: int
    stride: int


@dataclass(frozen=True)
class SliceEntry:
    name: str
    offset: int
    size: int
    perm: PermClass
    repeat: Optional[Repeat] = None


@dataclass(frozen=True)
class Manifest:
    device_name: str
    bar_length: int
    entries: tuple[SliceEntry, ...]


class ExpandedRange(NamedTuple):
    name: str
    offset: int
    size: int
    perm: PermClass


_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _parse_int(token: str, what: str, line: int) -> int:
    try:
        return int(token, 0)
    except ValueError:
        raise ManifestError(f"{what} {token!r} is not a number", line) from None


def parse(text: str) -> Manifest:
    """Parse manifest text. Unknown directives are errors, not warnings."""
    device_name: Optional[str] = None
    bar_length: Optional[int] = None
    entries: list[SliceEntry] = []
    seen: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        directive = fields[0]

        if directive == "device":
            if len(fields) != 2:
                raise ManifestError("expected: device <name>", lineno)
            if device_name is not None:
                raise ManifestError("duplicate device directive", lineno)
            device_name = fields[1]
        elif directive == "bar":
            if len(fields) != 2:
                raise ManifestError("expected: bar <hex-length>", lineno)
            if bar_length is not None:
                raise ManifestError("duplicate bar directive", lineno)
            bar_length = _parse_int(fields[1], "bar length", lineno)
        elif directive == "reg":
            if len(fields) not in (5, 7):
                raise ManifestError(
                    "expected: reg <name> <hex-offset> <dec-size> <RW|RO|KERNEL>"
                    " [repeat=<count> stride=<hex>]", lineno)
            name = fields[1]
            if not _NAME_RE.match(name):
                raise ManifestError(f"bad register name {name!r}", lineno)
            if name in seen:
                raise ManifestError(f"duplicate register name {name!r}", lineno)
            seen.add(name)
            offset = _parse_int(fields[2], "offset", lineno)
            size = _parse_int(fields[3], "size", lineno)
            try:
                perm = PermClass(fields[4])
            except ValueError:
                raise ManifestError(f"unknown permission class {fields[4]!r}", lineno) from None
            repeat = None
            if len(fields) == 7:
                m_count = re.fullmatch(r"repeat=(\S+)", fields[5])
                m_stride = re.fullmatch(r"stride=(\S+)", fields[6])
                if not m_count or not m_stride:
                    raise ManifestError("expected repeat=<count> stride=<hex>", lineno)
                repeat = Repeat(
                    count=_parse_int(m_count.group(1), "repeat count", lineno),
                    stride=_parse_int(m_stride.group(1), "stride", lineno),
                )
            entries.append(SliceEntry(name, offset, size, perm, repeat))
        else:
            raise ManifestError(f"unknown directive {directive!r}", lineno)

    if device_name is None:
        raise ManifestError("missing device directive")
    if bar_length is None:
        raise ManifestError("missing bar directive")
    entries.sort(key=lambda e: (e.offset, e.name))
    return Manifest(device_name, bar_length, tuple(entries))


def parse_file(path) -> Manifest:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def _expand_entry(entry: SliceEntry) -> list[ExpandedRange]:
    if entry.repeat is None or entry.repeat.count == 1:
        return [ExpandedRange(entry.name, entry.offset, entry.size, entry.perm)]
    return [
        ExpandedRange(f"{entry.name}[{k}]", entry.offset + k * entry.repeat.stride,
                      entry.size, entry.perm)
        for k in range(entry.repeat.count)
    ]


def validate(m: Manifest) -> list[str]:
    """Return every violation found (empty list means the manifest is sound)."""
    violations: list[str] = []
    for e in m.entries:
        if e.size < 1:
            violations.append(f"{e.name}: size must be >= 1 (got {e.size})")
        if e.repeat is not None:
            if e.repeat.count < 1:
                violations.append(f"{e.name}: repeat count must be >= 1 (got {e.repeat.count})")
            if e.repeat.stride < e.size:
                violations.append(
                    f"{e.name}: stride {e.repeat.stride:#x} smaller than size {e.size}")

    if violations:
        return violations

    ranges: list[ExpandedRange] = []
    for e in m.entries:
        ranges.extend(_expand_entry(e))

    for r in ranges:
        if r.offset < 0 or r.offset + r.size > m.bar_length:
            violations.append(
                f"{r.name}: range [{r.offset:#x},{r.offset + r.size:#x}) outside"
                f" bar [0,{m.bar_length:#x})")

    by_offset = sorted(ranges, key=lambda r: (r.offset, r.name))
    if by_offset:
        holder = by_offset[0]
        high = holder.offset + holder.size
        for r in by_offset[1:]:
            if r.offset < high:
                violations.append(f"{holder.name} and {r.name} overlap at {r.offset:#x}")
            if r.offset + r.size > high:
                holder = r
                high = r.offset + r.size
    return violations


def expand(m: Manifest) -> list[ExpandedRange]:
    """Expanded userspace ranges, manifest order; KERNEL entries are withheld."""
    out: list[ExpandedRange] = []
    for e in m.entries:
        if e.perm is PermClass.KERNEL:
            continue
        out.extend(_expand_entry(e))
    return out


def print_manifest(m: Manifest) -> str:
    """Render in the file format; reparsing the output yields an equal manifest."""
    lines = [f"device {m.device_name}", f"bar {m.bar_length:#x}"]
    for e in m.entries:
        line = f"reg {e.name} {e.offset:#06x} {e.size} {e.perm.value}"
        if e.repeat is not None:
            line += f" repeat={e.repeat.count} stride={e.repeat.stride:#x}"
        lines.append(line)
    return "\n".join(lines) + "\n"
