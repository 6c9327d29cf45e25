"""Capabilities in five minutes: bounds, permissions, tags, sealing.

Run:  python3 demos/01_capability_basics.py
"""

from capslice import CapFault, Perm, check_access
from capslice.capability import (
    PERM_RW,
    Capability,
    derive_bounds,
    make_otype_authority,
    restrict_perms,
    seal,
    unseal,
    with_cursor,
)

# A root capability over a 128 KiB device aperture. In the real system the
# kernel is born holding this; nobody else can conjure one.
root = Capability(base=0x0, length=0x20000, cursor=0x0, perms=PERM_RW, tag=True)
print("root:        ", root)

# Narrow it down to one 4-byte register. Bounds can only shrink.
ctrl = derive_bounds(root, 0x0000, 4)
print("ctrl slice:  ", ctrl)

# Drop the write permission. Permissions can only shrink too.
status = restrict_perms(derive_bounds(root, 0x0008, 4), Perm.READ)
print("status slice:", status)

# Trying to grow bounds does not raise; it hands back a dead (untagged)
# value, exactly like the hardware.
grown = derive_bounds(ctrl, 0x0000, 64)
print("grown bounds:", grown, "   <- tag is gone, permanently")
assert not grown.tag

# A dead capability cannot be revived by any further operation.
assert not derive_bounds(grown, 0x0000, 4).tag
assert not restrict_perms(grown, Perm.READ).tag

# Dereference checks happen at access time, through one chokepoint.
print()
for what, cap, need in [
    ("in-bounds write via ctrl", ctrl, Perm.WRITE),
    ("write via read-only status", status, Perm.WRITE),
    ("read past the end of ctrl", with_cursor(ctrl, 0x10), Perm.READ),
]:
    try:
        check_access(cap, 4, need)
        print(f"  ok      {what}")
    except CapFault as fault:
        print(f"  FAULT   {what}: {fault.kind.name} at {fault.address:#x}")

# Sealing turns a capability into an opaque token. Only the matching
# authority can open it; holding the bits is not enough.
print()
authority = make_otype_authority(7)
token = seal(ctrl, authority)
print("sealed token:", token)
try:
    check_access(token, 4, Perm.READ)
except CapFault as fault:
    print("deref sealed:", fault.kind.name)

reopened = unseal(token, authority)
print("unsealed:    ", reopened, " (bit-for-bit the original:", reopened == ctrl, ")")

wrong = make_otype_authority(9)
try:
    unseal(token, wrong)
except CapFault as fault:
    print("wrong otype: ", fault.kind.name)
