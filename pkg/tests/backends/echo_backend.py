#!/usr/bin/env python3
"""Test scorer backend speaking the line-delimited JSON protocol.

Replies with the mean pixel value of the window clipped to [0, 1], or with the
start frame scaled into [0, 1] when no pixels are sent.  Optional arguments
make it misbehave on purpose:

    --die-after N    exit with status 7 after answering N requests
    --garbage        reply with a non-JSON line
    --out-of-range   reply with score 1.5
"""

import argparse
import json
import sys

from crashbench.scorer import decode_request_frames


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--die-after", type=int, default=None)
    ap.add_argument("--garbage", action="store_true")
    ap.add_argument("--out-of-range", action="store_true")
    args = ap.parse_args()
    answered = 0
    for line in sys.stdin:
        if args.die_after is not None and answered >= args.die_after:
            print("backend gave up", file=sys.stderr)
            sys.exit(7)
        req = json.loads(line)
        if args.garbage:
            print("not json", flush=True)
            continue
        if "data" in req:
            score = float(min(1.0, max(0.0, decode_request_frames(req).mean())))
        else:
            score = min(1.0, req["start_frame"] / 100.0)
        if args.out_of_range:
            score = 1.5
        print(json.dumps({"id": req["id"], "score": score}), flush=True)
        answered += 1


if __name__ == "__main__":
    main()
