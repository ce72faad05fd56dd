"""Child process for external-model tests.

Usage: ``child_model.py MODE``; ``ok`` serves (sum, product) of two inputs,
the other modes misbehave in the way their name says.
"""

import sys
import time

import numpy as np

sys.path.insert(0, sys.argv[2]) if len(sys.argv) > 2 else None

from pdduq.models import serve_model  # noqa: E402

mode = sys.argv[1]

if mode == "badhandshake":
    print("HELLO", flush=True)
    sys.exit(0)


def respond(x):
    if mode == "slow":
        time.sleep(5)
    if mode == "garbage":
        print("not numbers", flush=True)
        return None
    if mode == "exit":
        sys.exit(7)
    if mode == "nan" and x[0] < 0:
        return [float("nan"), 0.0]
    return [x.sum(), x.prod()]


if mode == "garbage":
    print("PDDUQ 1 2 2", flush=True)
    for line in sys.stdin:
        print("not numbers", flush=True)
else:
    serve_model(lambda x: np.array(respond(x)), 2, 2)
