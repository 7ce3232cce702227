#!/usr/bin/env python3
"""Exact-rational goldens for the steady-state BBR share.

Writes buffer_packets, p and bbr_fraction for every preset link, buffer
size, BBR flow count and window length. Output is frozen under
crates/core/tests/data/ and compared against the Rust implementation.
"""

import sys
from fractions import Fraction as F
from math import floor

MTU = 1500
LINKS = [(10, 40), (50, 30), (40, 10), (100, 30)]  # Mbps, ms
BUFFERS = [1, 2, 4, 8, 16, 32, 64]
FLOWS = [1, 5]
WINDOWS = [400, 200, 120, 40]
INTERVAL, DWELL = F(10), F(1, 5)


def buffer_packets(mbps, ms, x):
    bdp = F(mbps * 10**6, 8) * F(ms, 1000) / MTU
    return max(1, floor(x * bdp + F(1, 2)))


def share(x, n, q, d):
    raw = F(1, 2) - F(1, 2 * x) - F(4 * n, q)
    p = min(max(raw, F(0)), F(1))
    probe = F(d) / INTERVAL * DWELL
    bbr = (1 - p) * (d - probe) / d
    return p, min(max(bbr, F(0)), F(1)), raw != p


def main(out):
    out.write("capacity_mbps,base_rtt_ms,buffer_bdp,bbr_flows,window_s,buffer_packets,p,bbr_fraction,clamped\n")
    for mbps, ms in LINKS:
        for x in BUFFERS:
            q = buffer_packets(mbps, ms, x)
            for n in FLOWS:
                for d in WINDOWS:
                    p, bbr, clamped = share(x, n, q, d)
                    out.write(f"{mbps},{ms},{x},{n},{d},{q},{float(p)!r},{float(bbr)!r},{str(clamped).lower()}\n")


if __name__ == "__main__":
    main(sys.stdout)
