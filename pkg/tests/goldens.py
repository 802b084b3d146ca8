"""Golden-file comparison for CLI output.

Set FRACMECH_UPDATE_GOLDEN=1 to rewrite the stored files from the current output.
"""

import csv
import io
import json
import math
import os
from pathlib import Path

GOLDEN = Path(__file__).parent / "golden"
RTOL, ATOL = 1e-9, 1e-12


def _close(a, b) -> bool:
    return math.isclose(a, b, rel_tol=RTOL, abs_tol=ATOL)


def _compare_tree(got, want, path="$"):
    if isinstance(want, dict):
        assert isinstance(got, dict) and list(got) == list(want), f"{path}: keys {list(got)} != {list(want)}"
        for k in want:
            _compare_tree(got[k], want[k], f"{path}.{k}")
    elif isinstance(want, list):
        assert isinstance(got, list) and len(got) == len(want), f"{path}: length differs"
        for i, (g, w) in enumerate(zip(got, want)):
            _compare_tree(g, w, f"{path}[{i}]")
    elif isinstance(want, float) and not isinstance(want, bool):
        assert isinstance(got, (int, float)) and _close(got, want), f"{path}: {got} != {want}"
    else:
        assert got == want, f"{path}: {got!r} != {want!r}"


def _compare_csv(got: str, want: str):
    g_rows = list(csv.reader(io.StringIO(got)))
    w_rows = list(csv.reader(io.StringIO(want)))
    assert g_rows[0] == w_rows[0], "CSV header differs"
    assert len(g_rows) == len(w_rows), "CSV row count differs"
    for i, (g, w) in enumerate(zip(g_rows[1:], w_rows[1:]), start=1):
        assert len(g) == len(w), f"row {i}: column count differs"
        for gv, wv in zip(g, w):
            assert _close(float(gv), float(wv)), f"row {i}: {gv} != {wv}"


def check(name: str, text: str) -> None:
    path = GOLDEN / name
    if os.environ.get("FRACMECH_UPDATE_GOLDEN") == "1":
        GOLDEN.mkdir(exist_ok=True)
        path.write_text(text)
        return
    want = path.read_text()
    if name.endswith(".json"):
        _compare_tree(json.loads(text), json.loads(want))
    else:
        _compare_csv(text, want)
