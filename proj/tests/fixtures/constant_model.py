#!/usr/bin/env python3
# Arity-4 model that predicts 0.25 for every row.
import json
import sys

for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "arity":
        out = {"arity": 4}
    else:
        out = {"preds": [0.25 for _ in req["rows"]]}
    print(json.dumps(out), flush=True)
