#!/usr/bin/env python3
"""Extract MovieLens-100K ratings as a `u.data`-style TSV.

The GroupLens host is not always reachable, but the pytorch-widedeep wheel on
PyPI bundles an exact copy of the 100K ratings table. This script downloads
that wheel with pip (no install) and writes user<TAB>item<TAB>rating<TAB>ts.

    python3 tools/fetch_movielens100k.py data/ml-100k/u.data
"""
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else "data/ml-100k/u.data"
    if os.path.exists(out):
        print(f"{out} already present")
        return 0
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "-d", tmp, "pytorch-widedeep==1.7.0"],
            check=True)
        wheel = glob.glob(os.path.join(tmp, "*.whl"))[0]
        with zipfile.ZipFile(wheel) as z:
            df = pd.read_parquet(io.BytesIO(z.read(MEMBER)))
    df = df[["user_id", "movie_id", "rating", "timestamp"]]
    if len(df) != 100000:
        print(f"unexpected row count {len(df)}", file=sys.stderr)
        return 1
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    df.to_csv(out, sep="\t", header=False, index=False)
    print(f"wrote {len(df)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
