"""Reading and writing game specifications and count tables.

Game files are JSON objects::

    {"name": "hardy",
     "scenario": {"ma": 2, "mb": 2, "oa": 2, "ob": 2},
     "mu": [...],          # ma*mb entries, x-major
     "S": [...],           # ma*mb*oa*ob entries, flat (x, y, a, b) order
     "V": [...]}

Floats are written with ``repr`` precision, so representable values
round-trip exactly.

Counts come either as CSV with header ``x,y,a,b,count`` or, for the 2,2,2,2
scenario, as a whitespace-separated 4x4 quadrant matrix with rows ``(x, a)``
and columns ``(y, b)``.
"""

from __future__ import annotations

import csv
import io as _io
import json
from importlib import resources
from pathlib import Path
from typing import Literal, Union

import numpy as np

from .errors import ParameterError, ShapeError, ValidationError
from .scenario import GameSpec, Scenario, flat_index, quadrant_to_flat
from .statistics import CountsTable

PathLike = Union[str, Path]
SHALM_TABLE = "shalm2015_counts.txt"


class GameFileError(ValidationError):
    """Malformed game specification file."""


class CountsFileError(ValidationError):
    """Malformed counts file; the message names the offending row."""


def game_to_dict(game: GameSpec) -> dict:
    sc = game.scenario
    return {
        "name": game.name,
        "scenario": {"ma": sc.ma, "mb": sc.mb, "oa": sc.oa, "ob": sc.ob},
        "mu": [float(v) for v in np.asarray(game.mu).reshape(-1)],
        "S": [float(v) for v in game.s_tensor],
        "V": [float(v) for v in game.v_tensor],
    }


def game_from_dict(data: dict) -> GameSpec:
    try:
        raw = data["scenario"]
        sc = Scenario(int(raw["ma"]), int(raw["mb"]), int(raw["oa"]), int(raw["ob"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise GameFileError(f"field 'scenario': expected {{ma, mb, oa, ob}} integers ({exc})") from exc
    arrays = {}
    for key, size in (("mu", sc.ma * sc.mb), ("S", sc.size), ("V", sc.size)):
        if key not in data:
            raise GameFileError(f"missing field '{key}'")
        try:
            arr = np.asarray(data[key], dtype=float).reshape(-1)
        except (TypeError, ValueError) as exc:
            raise GameFileError(f"field '{key}': not a numeric array ({exc})") from exc
        if arr.size != size:
            raise GameFileError(f"field '{key}': expected {size} entries, got {arr.size}")
        arrays[key] = arr
    try:
        return GameSpec(sc, arrays["mu"], arrays["S"], arrays["V"], name=str(data.get("name", "custom")))
    except (ValueError, ShapeError) as exc:
        raise GameFileError(str(exc)) from exc


def dump_game(game: GameSpec, path: PathLike) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=1) + "\n")


def load_game(path: PathLike) -> GameSpec:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise GameFileError(f"{path}: top level must be an object")
    return game_from_dict(data)


# -- counts -----------------------------------------------------------------------


def _parse_int(token: str, row: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise CountsFileError(f"row {row}: {token!r} is not an integer") from None
    if value < 0:
        raise CountsFileError(f"row {row}: negative value {value}")
    return value


def parse_counts_csv(text: str, scenario: Scenario) -> CountsTable:
    reader = csv.reader(_io.StringIO(text))
    counts = np.zeros(scenario.size, dtype=np.int64)
    header = None
    for row_no, row in enumerate(reader, start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in row]
        if header is None:
            header = cells
            if header != ["x", "y", "a", "b", "count"]:
                raise CountsFileError(f"row {row_no}: header must be x,y,a,b,count, got {','.join(cells)}")
            continue
        if len(cells) != 5:
            raise CountsFileError(f"row {row_no}: expected 5 fields, got {len(cells)}")
        x, y, a, b, n = (_parse_int(c, row_no) for c in cells)
        try:
            idx = flat_index(scenario, x, y, a, b)
        except IndexError as exc:
            raise CountsFileError(f"row {row_no}: {exc}") from None
        counts[idx] += n
    if header is None:
        raise CountsFileError("row 1: empty counts file")
    if counts.sum() == 0:
        raise CountsFileError("counts file holds no rounds")
    return CountsTable(scenario, counts)


def parse_counts_quadrant(text: str) -> CountsTable:
    rows = []
    for row_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise CountsFileError(f"row {row_no}: quadrant layout needs 4 entries, got {len(tokens)}")
        rows.append([_parse_int(t, row_no) for t in tokens])
    if len(rows) != 4:
        raise CountsFileError(f"quadrant layout needs 4 rows, got {len(rows)}")
    flat = quadrant_to_flat(np.array(rows, dtype=float))
    return CountsTable(Scenario(2, 2, 2, 2), np.rint(flat).astype(np.int64))


def load_counts(path: PathLike, scenario: Scenario = Scenario(2, 2, 2, 2),
                layout: Literal["csv", "quadrant"] = "csv") -> CountsTable:
    text = Path(path).read_text()
    if layout == "csv":
        return parse_counts_csv(text, scenario)
    if layout == "quadrant":
        if scenario != Scenario(2, 2, 2, 2):
            raise ShapeError("quadrant layout is only defined for the 2,2,2,2 scenario")
        return parse_counts_quadrant(text)
    raise ParameterError(f"unknown counts layout {layout!r}")


def counts_to_csv(table: CountsTable) -> str:
    sc = table.scenario
    out = ["x,y,a,b,count"]
    for x in range(sc.ma):
        for y in range(sc.mb):
            for a in range(sc.oa):
                for b in range(sc.ob):
                    out.append(f"{x},{y},{a},{b},{table.counts[flat_index(sc, x, y, a, b)]}")
    return "\n".join(out) + "\n"


def shalm_counts() -> CountsTable:
    """Bundled count table of the 2015 NIST loophole-free Bell test (quadrant layout)."""
    text = resources.files("postselect.data").joinpath(SHALM_TABLE).read_text()
    return parse_counts_quadrant(text)
