#!/usr/bin/env python3
"""Regenerates src/sobol_table.inc from the Joe-Kuo direction numbers
shipped with SciPy (new-joe-kuo-6.21201)."""
import os
import sys

import numpy as np
import scipy

DIMS = 1024

path = os.path.join(os.path.dirname(scipy.__file__), "stats",
                    "_sobol_direction_numbers.npz")
data = np.load(path)
poly, vinit = data["poly"], data["vinit"]

out = sys.stdout
out.write("// Generated by tools/gen_sobol_table.py. Do not edit.\n")
out.write("// Joe & Kuo direction numbers (new-joe-kuo-6.21201), first %d dimensions.\n" % DIMS)
out.write("// Row layout: {polynomial, {m_1, ..., m_s}}; dimension 0 is the van der Corput axis.\n")
for j in range(DIMS):
    p = int(poly[j])
    s = p.bit_length() - 1
    ms = ", ".join(str(int(v)) for v in vinit[j, :s])
    out.write("{%d, {%s}},\n" % (p, ms))
