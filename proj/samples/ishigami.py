#!/usr/bin/env python3
# Line-protocol model: one input row per line on stdin, one output per line on stdout.
import math
import sys

for line in sys.stdin:
    if not line.strip():
        continue
    x1, x2, x3 = map(float, line.split())
    print(repr(math.sin(x1) + 7.0 * math.sin(x2) ** 2 + 0.1 * x3 ** 4 * math.sin(x1)))
