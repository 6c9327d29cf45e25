"""A small latency heat map in virtual time.

Sweeps packet size against inter-packet delay for both echo paths and
prints the 99th-percentile improvement of kernel-bypass over the
kernel-mediated baseline. With no inter-packet delay the echo server
queues behind fixed kernel costs, so the bypass advantage is largest;
as the delay grows, waiting dominates and the advantage shrinks.

Run:  python3 demos/05_latency_sweep.py        (~20 seconds)
"""

from capslice.harness import SweepConfig, run_sweep

cfg = SweepConfig(
    packet_sizes=(1, 64, 256, 1024, 1472),
    delays_us=(0, 100, 1000, 10000),
    trials=300,
    seed=7,
)
result = run_sweep(cfg)

print("p99 round trip, virtual ns")
print(f"{'size':>6} {'delay_us':>9} {'bypass':>12} {'mediated':>12} {'improve':>9}")
for size in cfg.packet_sizes:
    for delay in cfg.delays_us:
        byp = next(c for c in result.cells
                   if (c.mode, c.packet_size, c.delay_us) == ("bypass", size, delay))
        med = next(c for c in result.cells
                   if (c.mode, c.packet_size, c.delay_us) == ("mediated", size, delay))
        pct = result.improvement_for(size, delay)
        print(f"{size:>6} {delay:>9} {byp.p99_ns:>12.1f} {med.p99_ns:>12.1f} {pct:>8.1f}%")
    print()

print("improvement heat map (rows: packet size, cols: inter-packet delay)")
header = " ".join(f"{d:>8}" for d in cfg.delays_us)
print(f"{'':>6} {header}")
for size in cfg.packet_sizes:
    row = " ".join(f"{result.improvement_for(size, d):>7.1f}%" for d in cfg.delays_us)
    print(f"{size:>6} {row}")

if result.flagged:
    print("\nflagged cells:", *result.flagged, sep="\n  ")
