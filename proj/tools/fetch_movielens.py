#!/usr/bin/env python3
"""Write MovieLens-100K ratings as data/ml-100k/u.data (user, item, rating, timestamp).

The GroupLens archive is tried first. When it cannot be reached, the ratings
are taken from the copy bundled in the pytorch-widedeep wheel (downloaded with
pip, never installed).
"""

import argparse
import glob
import io
import os
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"
EXPECTED_ROWS = 100000


def from_grouplens(timeout):
    with urllib.request.urlopen(GROUPLENS_URL, timeout=timeout) as resp:
        payload = resp.read()
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        return zf.read("ml-100k/u.data").decode("ascii")


def from_wheel():
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "pytorch-widedeep", "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheels = glob.glob(os.path.join(tmp, "*.whl"))
        if not wheels:
            raise RuntimeError("pip did not produce a wheel")
        with zipfile.ZipFile(wheels[0]) as zf:
            frame = pd.read_parquet(io.BytesIO(zf.read(WHEEL_MEMBER)))
    frame = frame[["user_id", "movie_id", "rating", "timestamp"]]
    lines = (f"{u}\t{i}\t{r}\t{t}\n" for u, i, r, t in frame.itertuples(index=False))
    return "".join(lines)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "ml-100k"))
    parser.add_argument("--timeout", type=float, default=10.0)
    args = parser.parse_args()

    try:
        text = from_grouplens(args.timeout)
    except Exception as exc:  # network blocked, DNS failure, ...
        print(f"grouplens unavailable ({exc}); using the pytorch-widedeep copy", file=sys.stderr)
        text = from_wheel()

    rows = text.count("\n")
    if rows != EXPECTED_ROWS:
        raise SystemExit(f"expected {EXPECTED_ROWS} ratings, got {rows}")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "u.data")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
    print(path)


if __name__ == "__main__":
    main()
