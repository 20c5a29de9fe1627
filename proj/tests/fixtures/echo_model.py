#!/usr/bin/env python3
# Replies with column 0 of each row. Usage: echo_model.py [ARITY] [MODE]
# MODE: ok (default), crash-on-predict, hang-on-predict, short-reply
import json
import sys
import time

arity = int(sys.argv[1]) if len(sys.argv) > 1 else 2
mode = sys.argv[2] if len(sys.argv) > 2 else "ok"

for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "arity":
        out = {"arity": arity}
    elif mode == "crash-on-predict":
        sys.exit(3)
    elif mode == "hang-on-predict":
        time.sleep(60)
        continue
    elif mode == "short-reply":
        out = {"preds": [row[0] for row in req["rows"]][:-1]}
    else:
        out = {"preds": [row[0] for row in req["rows"]]}
    sys.stdout.write(json.dumps(out) + "\n")
    sys.stdout.flush()
