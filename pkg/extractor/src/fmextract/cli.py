"""Command-line entry: fmextract <spec.json>."""
from __future__ import annotations

import argparse
import sys

from .runner import extract
from .spec import ExtractionError, load_spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fmextract",
        description="Extract frozen foundation-model features into KLDF files + manifest.",
    )
    parser.add_argument("spec", help="path to an extraction spec JSON file")
    args = parser.parse_args(argv)
    try:
        result = extract(load_spec(args.spec))
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rows = ", ".join(f"{s}={n}" for s, n in sorted(result.split_rows.items()))
    print(f"extracted width={result.width} ({rows}) -> {result.manifest_path}")
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
