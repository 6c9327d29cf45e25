"""Command-line front end.

Subcommands:
    validate <manifest>      parse + validate, list every violation
    slice-dump <manifest>    print the slice table the manifest carves
    audit                    run the isolation suite, write audit.txt
    sweep                    run the latency sweep, write results.csv
                             and improvement.csv

Exit codes: 0 all checks pass, 1 suite/validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .manifest import ManifestError, expand, parse_file, validate
from .physmem import AccessCostTable


def _add_cost_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--syscall-ns", type=float, default=None,
                   help="cost of one kernel entry or exit")
    p.add_argument("--mmio-ns", type=float, default=None,
                   help="cost of one device register access")
    p.add_argument("--ram-ns", type=float, default=None,
                   help="cost of one RAM word access")
    p.add_argument("--copy-ns-per-byte", type=float, default=None,
                   help="cost per byte copied")


def _costs_from(args: argparse.Namespace) -> AccessCostTable:
    costs = AccessCostTable()
    if args.syscall_ns is not None:
        costs.syscall_ns = args.syscall_ns
    if args.mmio_ns is not None:
        costs.mmio_access_ns = args.mmio_ns
    if args.ram_ns is not None:
        costs.ram_access_ns = args.ram_ns
    if args.copy_ns_per_byte is not None:
        costs.copy_per_byte_ns = args.copy_ns_per_byte
    return costs


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capslice",
        description="capability-sliced NIC access: isolation audits and "
                    "virtual-time latency sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate a manifest file")
    p_validate.add_argument("manifest", type=Path)

    p_dump = sub.add_parser("slice-dump", help="print the slices a manifest carves")
    p_dump.add_argument("manifest", type=Path)

    p_audit = sub.add_parser("audit", help="run the isolation suite")
    p_audit.add_argument("--manifest", type=Path, default=None,
                         help="register manifest (default: shipped e1000e map)")
    p_audit.add_argument("--dma-manifest", type=Path, default=None,
                         help="DMA-region manifest (default: shipped layout)")
    p_audit.add_argument("--out", type=Path, default=None,
                         help="directory for audit.txt")

    p_sweep = sub.add_parser("sweep", help="latency sweep over sizes and delays")
    p_sweep.add_argument("--manifest", type=Path, default=None)
    p_sweep.add_argument("--dma-manifest", type=Path, default=None)
    p_sweep.add_argument("--sizes", type=_int_list, default=None,
                         help="comma-separated payload sizes (bytes)")
    p_sweep.add_argument("--delays", type=_int_list, default=None,
                         help="comma-separated inter-packet delays (us)")
    p_sweep.add_argument("--trials", type=int, default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--modes", default=None,
                         help="comma-separated subset of: bypass,mediated")
    p_sweep.add_argument("--link-ns", type=float, default=None,
                         help="link propagation delay each way")
    p_sweep.add_argument("--wire-ns-per-byte", type=float, default=None,
                         help="frame serialization cost (default 8 = 1 Gbps)")
    p_sweep.add_argument("--window", type=int, default=None,
                         help="max in-flight requests from the peer")
    p_sweep.add_argument("--out", type=Path, default=Path("out"),
                         help="directory for results.csv / improvement.csv")
    _add_cost_flags(p_sweep)
    return parser


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        m = parse_file(args.manifest)
    except (OSError, ManifestError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    violations = validate(m)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return 1
    ranges = len(expand(m))
    print(f"{args.manifest}: ok ({len(m.entries)} entries, {ranges} userspace ranges)")
    return 0


def cmd_slice_dump(args: argparse.Namespace) -> int:
    try:
        m = parse_file(args.manifest)
    except (OSError, ManifestError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    violations = validate(m)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return 1
    table = harness.slice_standalone(m)
    for name, cap in table:
        print(harness.format_slice_line(name, cap))
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    bar_m = parse_file(args.manifest) if args.manifest else None
    dma_m = parse_file(args.dma_manifest) if args.dma_manifest else None
    report = harness.run_isolation_suite(bar_m, dma_m)
    text = report.render()
    print(text, end="")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "audit.txt").write_text(text, encoding="utf-8")
        print(f"wrote {args.out / 'audit.txt'}")
    return 0 if report.passed else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = harness.SweepConfig(costs=_costs_from(args))
    if args.sizes is not None:
        cfg.packet_sizes = args.sizes
    if args.delays is not None:
        cfg.delays_us = args.delays
    if args.trials is not None:
        cfg.trials = args.trials
    if args.seed is not None:
        cfg.seed = args.seed
    if args.modes is not None:
        cfg.modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    if args.link_ns is not None:
        cfg.link_ns = args.link_ns
    if args.wire_ns_per_byte is not None:
        cfg.wire_ns_per_byte = args.wire_ns_per_byte
    if args.window is not None:
        cfg.window = args.window
    if args.manifest is not None:
        cfg.bar_manifest = parse_file(args.manifest)
    if args.dma_manifest is not None:
        cfg.dma_manifest = parse_file(args.dma_manifest)

    result = harness.run_sweep(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "results.csv").write_text(harness.results_csv(result), encoding="utf-8")
    print(f"wrote {args.out / 'results.csv'} ({len(result.cells)} cells)")
    if result.improvements:
        (args.out / "improvement.csv").write_text(harness.improvement_csv(result),
                                                  encoding="utf-8")
        print(f"wrote {args.out / 'improvement.csv'}")
    for warning in result.flagged:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return exit_.code if isinstance(exit_.code, int) else 2
    handlers = {
        "validate": cmd_validate,
        "slice-dump": cmd_slice_dump,
        "audit": cmd_audit,
        "sweep": cmd_sweep,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
