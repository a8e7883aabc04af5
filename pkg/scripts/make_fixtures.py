"""Regenerate the bundled scenario fixtures under src/greencell/data/.

Requires tomli-w (dev only): pip install tomli-w
"""

import re
from pathlib import Path

import tomli_w

from greencell.profiles import single_cell_doc, three_sector_doc

OUT = Path(__file__).resolve().parents[1] / "src" / "greencell" / "data"

HEADERS = {
    "single_cell": "# Single macro cell, two equal-area regions (inner disk r=R/sqrt2, outer ring), K=1.\n",
    "three_sector": "# Three co-located 120-degree sectors, asymmetric traffic psi = 1:2:3, K=1.\n",
    "three_sector_symmetric": "# Three co-located 120-degree sectors, symmetric traffic psi = 1:1:1, K=1.\n",
}


_SCALAR_ARRAY = re.compile(r"\[\s*((?:[-+0-9.eE]+|\"[^\"\n]*\"),\s*)+\]")


def compact(text: str) -> str:
    """Put arrays of scalars (and arrays of such arrays) on one line."""
    squash = lambda m: "[" + ", ".join(x.strip() for x in m.group(0)[1:-1].split(",") if x.strip()) + "]"
    prev = None
    while prev != text:
        prev = text
        text = _SCALAR_ARRAY.sub(squash, text)
        text = re.sub(r"\[\s*((?:\[[^\[\]\n]*\],\s*)+)\]", lambda m: "[" + ", ".join(
            x.strip().rstrip(",") for x in re.findall(r"\[[^\[\]\n]*\],?", m.group(1))) + "]", text)
    return text


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    docs = {
        "single_cell": single_cell_doc(),
        "three_sector": three_sector_doc((1, 2, 3)),
        "three_sector_symmetric": three_sector_doc((1, 1, 1), name="three_sector_symmetric"),
    }
    for name, doc in docs.items():
        path = OUT / f"{name}.scn"
        path.write_text(HEADERS[name] + "# Generated by scripts/make_fixtures.py.\n\n" + compact(tomli_w.dumps(doc)))
        print("wrote", path)


if __name__ == "__main__":
    main()
