#!/usr/bin/env python3
"""Regenerate the bundled benchmark model files in src/klshell/data/."""

from pathlib import Path

from klshell import benchmarks
from klshell.modelfile import parse_model, write_model

OUT = Path(__file__).resolve().parent.parent / "src" / "klshell" / "data"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, builder in benchmarks.CASES.items():
        desc = builder()
        parse_model(desc)  # validate before writing
        path = OUT / f"case{name}.yaml"
        write_model(desc, path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
