"""waygal-convert: convert WAY-EEG-GAL distribution files for one participant."""

import argparse
import sys

from .convert import ConversionError, convert


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="waygal-convert",
        description="Convert WAY-EEG-GAL .mat files (P<N>_AllLifts.mat and "
                    "WS_P<N>_S*.mat) into a cmcgrasp dataset directory")
    parser.add_argument("--participant", type=int, required=True)
    parser.add_argument("--src", required=True, help="directory with the "
                        "participant's .mat files")
    parser.add_argument("--dst", required=True, help="output dataset directory")
    args = parser.parse_args(argv)
    try:
        manifest = convert(args.participant, args.src, args.dst)
    except (ConversionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    counts = {}
    for trial in manifest["trials"]:
        counts[trial["weight_g"]] = counts.get(trial["weight_g"], 0) + 1
    print(f"converted {len(manifest['trials'])} trials "
          f"({len(manifest['recordings'])} recordings) to {args.dst}")
    print("trials per weight: "
          + ", ".join(f"{w} g: {n}" for w, n in sorted(counts.items())))
    return 0


if __name__ == "__main__":
    sys.exit(main())
