#!/usr/bin/env python3
"""Fetch (or convert) the UCR Coffee dataset into data/ucr/.

Usage:
    python3 scripts/fetch_coffee.py                 # download from
                                                    # timeseriesclassification.com
    python3 scripts/fetch_coffee.py --from-dir DIR  # convert local
                                                    # Coffee_TRAIN.txt / Coffee_TEST.txt

Output: data/ucr/Coffee_TRAIN.tsv and Coffee_TEST.tsv, one instance per
line, integer label first, tab-separated values.
"""
import argparse
import io
import pathlib
import sys
import urllib.request
import zipfile

URL = "https://www.timeseriesclassification.com/aeon-toolkit/Coffee.zip"
OUT_DIR = pathlib.Path(__file__).resolve().parent.parent / "data" / "ucr"


def convert(text: str) -> str:
    rows = []
    for line in text.splitlines():
        fields = line.replace(",", " ").split()
        if not fields:
            continue
        label = int(float(fields[0]))
        rows.append("\t".join([str(label)] + fields[1:]))
    if not rows:
        raise SystemExit("no instances found in input")
    return "\n".join(rows) + "\n"


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--from-dir", help="directory holding Coffee_TRAIN.txt / Coffee_TEST.txt")
    args = ap.parse_args()

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    if args.from_dir:
        src = pathlib.Path(args.from_dir)
        texts = {
            split: (src / f"Coffee_{split}.txt").read_text() for split in ("TRAIN", "TEST")
        }
    else:
        print(f"downloading {URL} ...", file=sys.stderr)
        with urllib.request.urlopen(URL) as resp:
            archive = zipfile.ZipFile(io.BytesIO(resp.read()))
        texts = {
            split: archive.read(f"Coffee_{split}.txt").decode() for split in ("TRAIN", "TEST")
        }

    for split, text in texts.items():
        out = OUT_DIR / f"Coffee_{split}.tsv"
        out.write_text(convert(text))
        print(f"wrote {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
