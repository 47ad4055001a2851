"""Run the full pipeline on the reference survey data and compare against reference values.

usage: python scripts/reproduce.py configs/masit.yaml [--out DIR]

The config is a pipeline YAML (see configs/masit.template.yaml) whose
``reference`` allocation is complete. Each reference value is printed next to
the reproduced one; the exit status is that of the pipeline run.
"""

from __future__ import annotations

import argparse
import json
import re
from pathlib import Path

from netpsych.cli import main as cli_main
from netpsych.config import load_config

REFERENCE = {
    "cfa": {"chi_square": 898.803, "df": 227, "cfi": 0.811, "rmsea": 0.096, "srmr": 0.079},
    "ega_communities": 4,
    "uva_top_pair": ((2, 9), 0.308),
    "tefi": (-18.31, -14.63),
    "correlogram_nonsignificant": 6,
    "kw": [(0.08, 0.959), (2.14, 0.343), (4.3, 0.117)],
}


def _num(item: str) -> int:
    return int(re.search(r"(\d+)$", item).group(1))


def _load(out: Path, name: str):
    return json.loads((out / name).read_text(encoding="utf-8"))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default="reproduction")
    args = ap.parse_args(argv)
    cfg = load_config(args.config)
    out = Path(args.out)
    rc = cli_main(["run", "-c", args.config, "-o", str(out)])
    if rc != 0:
        return rc

    cfa = _load(out, "cfa.json")
    print("CFA (reproduced / reference)")
    for key, ref in REFERENCE["cfa"].items():
        print(f"  {key:11s} {cfa[key]:10.3f} / {ref}")
    part = _load(out, "partition.json")
    print(f"EGA communities {part['n_communities']} / {REFERENCE['ega_communities']}")
    uva = _load(out, "uva.json")["pairs"]
    if uva:
        top = uva[0]
        (a, b), ref = REFERENCE["uva_top_pair"]
        print(f"UVA top pair ({_num(top['item_a'])}, {_num(top['item_b'])}) wTO {top['wto']:.3f} "
              f"/ ({a}, {b}) {ref}")
    tefi = _load(out, "tefi.json")["comparison"]
    print(f"TEFI base {tefi['base_mean']:.2f}, comparison {tefi['comparison_mean']:.2f}, "
          f"p {tefi['p_one_tailed']:.3g} / {REFERENCE['tefi']}, p = .002")
    corr = _load(out, "correlogram_summary.json")
    print(f"correlogram non-significant pairs {corr['n_nonsignificant']} / "
          f"{REFERENCE['correlogram_nonsignificant']}, negative {corr['n_negative']} / 0")
    blocks = _load(out, "compare.json").get("by_cohort") or []
    for block, (h, p) in zip(blocks, REFERENCE["kw"]):
        kw = block["kruskal_wallis"]
        print(f"KW {block['factor']}: H {kw['statistic']:.2f} p {kw['p']:.3f} / H {h} p {p}")
    print(f"artifacts in {out.resolve()} (seed {cfg.seed})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
