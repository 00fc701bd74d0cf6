"""Stand-in penetration simulator for integration tests.

NOT A PHYSICAL MODEL.  Replies with a smooth surface that grows with
impact velocity and shrinks with material flow stress,

    reading = scale * v^velocity_power * (stress_ref / rho)^stress_power,

which is merely shaped like a penetration response so the subprocess
protocol, caching and checkpoint paths can be exercised end to end.

Speaks the adapter line protocol: one line of whitespace-separated numbers
("v_s rho0") on stdin, one decimal reading on stdout per line.
"""

from __future__ import annotations

import argparse
import sys


def penetration(v: float, rho: float, scale: float = 0.18,
                velocity_power: float = 2.0, stress_power: float = 1.0,
                stress_ref: float = 317.0) -> float:
    """The mock response surface (monotone in both inputs)."""
    v = max(v, 0.0)
    rho = max(rho, 1e-6)
    return scale * v ** velocity_power * (stress_ref / rho) ** stress_power


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scale", type=float, default=0.18)
    parser.add_argument("--velocity-power", type=float, default=2.0)
    parser.add_argument("--stress-power", type=float, default=1.0)
    parser.add_argument("--stress-ref", type=float, default=317.0)
    parser.add_argument("--fail-after", type=int, default=0,
                        help="exit with status 7 after N replies (test hook)")
    parser.add_argument("--emit-nan", action="store_true",
                        help="reply NaN to every query (test hook)")
    args = parser.parse_args(argv)

    served = 0
    for line in sys.stdin:
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 2:
            print(f"expected 2 inputs, got {len(fields)}", file=sys.stderr)
            return 2
        if args.emit_nan:
            sys.stdout.write("NaN\n")
            sys.stdout.flush()
            continue
        v, rho = float(fields[0]), float(fields[1])
        value = penetration(v, rho, args.scale, args.velocity_power,
                            args.stress_power, args.stress_ref)
        sys.stdout.write(repr(value) + "\n")
        sys.stdout.flush()
        served += 1
        if args.fail_after and served >= args.fail_after:
            return 7
    return 0


if __name__ == "__main__":
    sys.exit(main())
