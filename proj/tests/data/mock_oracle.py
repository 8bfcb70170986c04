#!/usr/bin/env python3
# Energy = sum of squared coordinates; minimization returns the origin.
import json
import sys

for line in sys.stdin:
    req = json.loads(line)
    coords = req["coords"]
    if req["op"] == "energy":
        out = {"energy": sum(v * v for row in coords for v in row)}
    elif req["op"] == "minimize":
        out = {"coords": [[0.0, 0.0, 0.0] for _ in coords]}
    else:
        out = {"error": "unknown op"}
    sys.stdout.write(json.dumps(out) + "\n")
    sys.stdout.flush()
