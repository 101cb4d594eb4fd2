"""Command line entry: render one panel from a spec file or a preset.

``render --spec panel.json`` reads the whole panel description from a
JSON file; ``render --preset fig1_center --dir results/fig1_center``
uses a shipped layout over every CSV in the directory.  Exit code 0 on
success, 2 for any input problem (the message names the offending
file, column, or field).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .presets import PRESETS
from .render import PanelSpec, RowSpec, SchemaError, render


def _rows_from_json(raw, where: str) -> tuple[RowSpec, ...]:
    if not isinstance(raw, list) or not raw:
        raise ValueError(f"{where}: 'rows' must be a nonempty list")
    rows = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "direction" not in entry:
            raise ValueError(f"{where}: rows[{i}] needs a 'direction' field")
        rows.append(
            RowSpec(str(entry["direction"]), str(entry.get("ylabel", "overlap")))
        )
    return tuple(rows)


def _csvs_in(directory: str | Path) -> tuple[str, ...]:
    paths = sorted(str(p) for p in Path(directory).glob("*.csv"))
    if not paths:
        raise ValueError(f"no CSV files in {directory}")
    return tuple(paths)


def spec_from_file(path: str) -> PanelSpec:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValueError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be an object")
    known = {"csvs", "dir", "rows", "out", "dpi", "title", "xlabel"}
    for key in data:
        if key not in known:
            raise ValueError(f"{path}: unknown field {key!r}")
    if "csvs" in data:
        csvs = tuple(str(p) for p in data["csvs"])
    elif "dir" in data:
        csvs = _csvs_in(data["dir"])
    else:
        raise ValueError(f"{path}: need 'csvs' or 'dir'")
    if "out" not in data:
        raise ValueError(f"{path}: need 'out'")
    return PanelSpec(
        csv_paths=csvs,
        rows=_rows_from_json(data["rows"], path) if "rows" in data else (RowSpec("e1"),),
        out=str(data["out"]),
        dpi=int(data.get("dpi", 150)),
        title=str(data.get("title", "")),
        xlabel=str(data.get("xlabel", "gradient step t")),
    )


def spec_from_preset(name: str, directory: str, out: str | None, dpi: int) -> PanelSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return PanelSpec(
        csv_paths=_csvs_in(directory),
        rows=PRESETS[name],
        out=out or str(Path(directory) / f"{name}.png"),
        dpi=dpi,
        title=name,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="draw a static overlap panel from engine CSVs"
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--spec", help="JSON panel description")
    source.add_argument("--preset", help="shipped panel layout name")
    parser.add_argument("--dir", help="directory of engine CSVs (with --preset)")
    parser.add_argument("--out", help="image path (with --preset; default <dir>/<preset>.png)")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)
    try:
        if args.spec:
            spec = spec_from_file(args.spec)
        else:
            if not args.dir:
                raise ValueError("--preset needs --dir")
            spec = spec_from_preset(args.preset, args.dir, args.out, args.dpi)
        written = render(spec)
    except (SchemaError, ValueError) as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 2
    print(written)
    return 0


if __name__ == "__main__":
    sys.exit(main())
