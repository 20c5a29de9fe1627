#!/usr/bin/env python3
# Handshakes correctly, then answers every batch with a non-JSON line.
import sys

for line in sys.stdin:
    if '"arity"' in line:
        print('{"arity": 2}', flush=True)
    else:
        print("hello", flush=True)
