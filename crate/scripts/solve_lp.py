#!/usr/bin/env python3
"""Solve an LP-format MIP with HiGHS and print status, objective and wall time as JSON."""

import json
import sys
import time

import highspy


def main() -> int:
    if len(sys.argv) != 2:
        print("usage: solve_lp.py MODEL.lp", file=sys.stderr)
        return 1
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 1e-9)
    h.setOptionValue("threads", 1)
    h.readModel(sys.argv[1])
    start = time.perf_counter()
    h.run()
    elapsed = time.perf_counter() - start
    info = h.getInfo()
    print(json.dumps({
        "status": h.modelStatusToString(h.getModelStatus()),
        "objective": info.objective_function_value,
        "seconds": elapsed,
    }))
    return 0


if __name__ == "__main__":
    sys.exit(main())
