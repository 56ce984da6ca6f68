#!/usr/bin/env python3
"""Stand-in for the model-backed annotator, speaking the same file protocol.

Mentions are capitalized two-word names; the logit alternates in sign by unit.
FAKE_ANNOTATOR_MODE selects a failure: "bad_span" writes a wrong unit boundary,
"fail" exits non-zero. FAKE_ANNOTATOR_ARGS names a file that receives argv.
"""

import argparse
import json
import os
import re
import sys

NAME = re.compile(r"\b[A-Z][a-z]+ [A-Z][a-z]+\b")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ner-model", required=True)
    p.add_argument("--sentiment-model", required=True)
    args = p.parse_args()
    if os.environ.get("FAKE_ANNOTATOR_ARGS"):
        with open(os.environ["FAKE_ANNOTATOR_ARGS"], "w") as f:
            json.dump(sys.argv[1:], f)
    mode = os.environ.get("FAKE_ANNOTATOR_MODE", "ok")
    if mode == "fail":
        print("model download failed", file=sys.stderr)
        sys.exit(3)
    with open(args.inp) as src, open(args.out, "w") as out:
        for line in src:
            if not line.strip():
                continue
            doc = json.loads(line)
            for k, (start, end) in enumerate(doc["units"]):
                mentions = []
                for s in range(start, end):
                    for m in NAME.finditer(doc["sentences"][s]):
                        mentions.append(
                            {
                                "surface": m.group(0),
                                "sentence_index": s,
                                "char_start": m.start(),
                                "char_end": m.end(),
                            }
                        )
                if mode == "bad_span" and k == 0:
                    end += 1
                record = {
                    "story_id": doc["story_id"],
                    "unit_index": k,
                    "sentence_start": start,
                    "sentence_end": end,
                    "logit": 1.5 if k % 2 == 0 else -0.5,
                    "mentions": mentions,
                }
                out.write(json.dumps(record) + "\n")


if __name__ == "__main__":
    main()
