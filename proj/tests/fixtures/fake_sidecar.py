#!/usr/bin/env python3
"""Test double for the forecaster sidecar protocol.

Each path is the last context value plus 0.01 * sample index, so clients can
check shapes and values exactly. The first argument selects a failure mode.
"""
import json
import sys

mode = sys.argv[1] if len(sys.argv) > 1 else "ok"


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


if mode == "bad-handshake":
    send({"protocol": "other/9"})
    sys.exit(0)
if mode == "exit":
    sys.exit(3)
send({"protocol": "odca-forecast/1"})

for line in sys.stdin:
    try:
        req = json.loads(line)
        rid = req["id"]
        ctx = req["context"]
        h = int(req["horizon"])
        s = int(req["n_samples"])
        last = float(ctx[-1])
    except (ValueError, KeyError, TypeError, IndexError):
        send({"id": None, "error": "parse"})
        continue
    if mode == "crash":
        sys.exit(4)
    if mode == "error":
        send({"id": rid, "error": "model unavailable"})
    elif mode == "wrong-id":
        send({"id": rid + 1, "samples": [[last] * h for _ in range(s)]})
    elif mode == "short":
        send({"id": rid, "samples": [[last] * (h - 1) for _ in range(s)]})
    else:
        send({"id": rid, "samples": [[last + 0.01 * k] * h for k in range(s)]})
