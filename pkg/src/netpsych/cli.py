"""Command-line interface: one subcommand per analysis stage plus ``run``.

Every command buffers its artifacts in memory and writes them, together
with a manifest of sha256 checksums, only after every stage succeeded.
A failed command therefore leaves no partial output behind.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import export
from .association import AssociationError, association_matrix, nearest_positive_definite
from .boot import boot_ega
from .cfa import CfaConvergenceError, CfaOptions, FactorModelSpec, fit_cfa
from .community import partition_from_sets
from .config import ConfigError, PipelineConfig, load_config, override, read_factor_sets
from .dataset import DataError, LoadOptions, cohort_summaries, describe, factor_means, load_csv, write_csv
from .ega import EgaStageError, compare_partitions, factor_score_correlogram, run_ega
from .entropy_fit import tefi, tefi_bootstrap_test
from .inferential import cohort_comparisons
from .redundancy import flag_redundant, wto_matrix
from .simulate import SpecError, block_spec, generate, planted_sets

log = logging.getLogger("netpsych")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class StageError(RuntimeError):
    def __init__(self, stage: str, exit_code: int, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, SpecError)):
        return EXIT_CONFIG
    if isinstance(exc, CfaConvergenceError):
        return EXIT_NUMERIC
    if isinstance(exc, EgaStageError):
        return EXIT_NUMERIC if exc.stage == "glasso" else EXIT_DATA
    if isinstance(exc, (DataError, AssociationError)):
        return EXIT_DATA
    if isinstance(exc, (np.linalg.LinAlgError, FloatingPointError, RuntimeError)):
        return EXIT_NUMERIC
    if isinstance(exc, ValueError):
        return EXIT_DATA
    if isinstance(exc, OSError):
        return EXIT_CONFIG
    raise exc


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, _exit_code(exc), str(exc)) from exc


class Artifacts:
    """Buffered output files committed in one step with a checksum manifest."""

    def __init__(self, command: str, config: dict, seed: int | None = None):
        self.command = command
        self.config = config
        self.seed = seed
        self.files: dict[str, bytes] = {}

    def text(self, name: str, text: str) -> None:
        if name in self.files:
            raise ValueError(f"duplicate artifact {name}")
        self.files[name] = text.encode("utf-8")

    def json(self, name: str, obj) -> None:
        self.text(name, json.dumps(export.to_jsonable(obj), indent=2) + "\n")

    def commit(self, out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for name, data in self.files.items():
            path = out_dir / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            entries.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        manifest = {"netpsych_version": __version__, "command": self.command, "master_seed": self.seed,
                    "config": self.config, "artifacts": entries}
        mpath = out_dir / "manifest.json"
        mpath.write_text(json.dumps(export.to_jsonable(manifest), indent=2) + "\n", encoding="utf-8")
        return mpath


# --------------------------------------------------------------------------
# shared helpers

def _load(cfg: PipelineConfig):
    opts = LoadOptions(cfg.items, cfg.item_prefix, cfg.cohort_column, cfg.scale_min, cfg.scale_max)
    return load_csv(cfg.input, opts)


def _sub_seeds(master: int, n: int) -> list[int]:
    """Independent per-stage seeds derived from the master seed."""
    return [int(s) for s in np.random.SeedSequence(master).generate_state(n)]


def _reference_sets(cfg: PipelineConfig, matrix):
    if cfg.reference is None:
        return None
    sets = read_factor_sets(cfg.reference)
    missing = sorted(set(i for v in sets.values() for i in v) - set(matrix.item_ids))
    if missing:
        raise ConfigError(f"reference allocation names unknown items {missing}")
    return sets


def _stage_describe(art: Artifacts, matrix, report, sets):
    art.json("load_report.json", report)
    desc = describe(matrix)
    art.json("descriptives.json", [d.__dict__ for d in desc])
    lines = ["| item | n | mean | sd | median | min | max |", "|---|---|---|---|---|---|---|"]
    for d in desc:
        v = d.__dict__
        lines.append(f"| {v['item_id']} | {v['n']} | {v['mean']:.3f} | {v['sd']:.3f} | "
                     f"{v['median']:g} | {v['min']} | {v['max']} |")
    art.text("descriptives.md", "\n".join(lines) + "\n")
    if sets is not None:
        summaries, rows = cohort_summaries(matrix, sets)
        art.json("cohort_summaries.json", {"summaries": [s.__dict__ for s in summaries], "long": rows})
    return desc


def _stage_corr(art: Artifacts, matrix, method: str):
    am = association_matrix(matrix, method)
    art.json("correlogram.json", am)
    p = len(am.item_ids)
    off = ~np.eye(p, dtype=bool)
    nonsig = (am.p_values >= 0.05) & off
    iu = np.triu_indices(p, 1)
    summary = {
        "method": am.method,
        "n_negative": int((am.coefficients[iu] < 0).sum()),
        "n_nonsignificant": int(nonsig[iu].sum()),
        "nonsignificant_pairs": [[am.item_ids[i], am.item_ids[j]] for i, j in zip(*iu) if nonsig[i, j]],
    }
    art.json("correlogram_summary.json", summary)
    art.text("correlogram.svg", export.heatmap_svg(am.coefficients, am.item_ids, blank=nonsig,
                                                   title=f"{am.method} correlogram"))
    return am, summary


def _stage_cfa(art: Artifacts, matrix, model_path, seed: int):
    sets = read_factor_sets(model_path)
    spec = FactorModelSpec.from_sets(sets)
    fit = fit_cfa(matrix, spec, CfaOptions(seed=seed, raise_on_failure=True))
    art.json("cfa.json", fit)
    art.text("cfa_report.txt", fit.report())
    return fit


def _stage_ega(art: Artifacts, matrix, cfg: PipelineConfig, ref_sets):
    res = run_ega(matrix, cfg.ega)
    nodes, w = res.network.nodes, res.network.weights
    memb = res.partition.membership
    art.json("network.json", res.network)
    art.text("network.dot", export.network_dot(nodes, w, memb))
    art.text("network.graphml", export.network_graphml(
        nodes, w, memb, {"lambda": res.network.lambda_selected, "ebic": res.network.ebic,
                         "gamma": res.network.gamma}))
    art.json("partition.json", {"assignment": res.partition.assignment,
                                "n_communities": res.partition.n_communities,
                                "modularity": res.partition.modularity,
                                "metadata": res.method_metadata})
    R = nearest_positive_definite(res.correlation.coefficients, cfg.ega.pd_floor)
    blank = (res.correlation.p_values >= 0.05) & ~np.eye(len(nodes), dtype=bool)
    art.text("ega_correlogram.svg", export.heatmap_svg(R, nodes, blank=blank,
                                                       title=f"{res.correlation.method} correlations"))
    jac = None
    if ref_sets is not None:
        jac = compare_partitions(ref_sets, res.partition, prefix_b="EGA")
        art.json("jaccard.json", jac)
    return res, jac


def _stage_boot(art: Artifacts, matrix, cfg: PipelineConfig, seed: int):
    b = cfg.bootstrap
    res = boot_ega(matrix, cfg.ega, b.n, seed, b.mode, b.jobs)
    art.json("stability.json", res)
    art.text("stability.svg", export.stability_svg(res.item_stability, res.median_structure.assignment,
                                                   title=f"item stability ({res.n_replications} replications)"))
    return res


def _stage_uva(art: Artifacts, ega_res):
    w = wto_matrix(ega_res.network)
    rep = flag_redundant(w, ega_res.network.nodes)
    art.json("uva.json", rep)
    art.text("uva.md", rep.to_markdown())
    return rep


def _stage_tefi(art: Artifacts, matrix, partition, cfg: PipelineConfig, seed: int):
    R = nearest_positive_definite(association_matrix(matrix, cfg.ega.corr_method).coefficients,
                                  cfg.ega.pd_floor)
    point = tefi(R, partition.membership)
    cmp_ = tefi_bootstrap_test(matrix, partition, cfg.tefi.n_draws, seed, cfg.ega.corr_method,
                               cfg.ega.pd_floor)
    art.json("tefi.json", {"point": point.__dict__, "comparison": cmp_})
    return point, cmp_


def _stage_compare(art: Artifacts, matrix, sets, cfg: PipelineConfig, label: str):
    out = {"partition": label, "factors": sets}
    if matrix.cohorts is not None:
        out["by_cohort"] = cohort_comparisons(matrix, sets, by="cohort")
        out["by_factor"] = cohort_comparisons(matrix, sets, by="factor")
        means = factor_means(matrix, sets)
        cohorts = np.array(matrix.cohorts)
        labels = sorted(set(matrix.cohorts), key=lambda c: (len(c), c))
        by_factor = {f: {c: v[cohorts == c] for c in labels} for f, v in means.items()}
        by_cohort = {c: {f: v[cohorts == c] for f, v in means.items()} for c in labels}
        yr = (cfg.scale_min, cfg.scale_max)
        art.text("boxplot_by_cohort.svg", export.boxplot_svg(by_factor, yr, "factor means by cohort"))
        art.text("boxplot_by_factor.svg", export.boxplot_svg(by_cohort, yr, "factor means by factor"))
    else:
        out["by_cohort"] = None
        out["note"] = "no cohort column; cohort tests skipped"
    art.json("compare.json", out)
    return out


# --------------------------------------------------------------------------
# commands

def _prepare(args, need_input=True) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    ov = {
        "input": Path(args.input) if getattr(args, "input", None) else None,
        "items": tuple(args.items.split(",")) if getattr(args, "items", None) else None,
        "item_prefix": getattr(args, "item_prefix", None),
        "cohort_column": getattr(args, "cohort_column", None),
        "output_dir": Path(args.out) if getattr(args, "out", None) else None,
        "seed": getattr(args, "seed", None),
        "correlation": getattr(args, "method", None),
        "cfa_model": Path(args.model) if getattr(args, "model", None) else None,
        "reference": Path(args.reference) if getattr(args, "reference", None) else None,
        "ega.corr_method": getattr(args, "ega_method", None),
        "ega.gamma": getattr(args, "gamma", None),
        "ega.steps": getattr(args, "steps", None),
        "ega.algorithm": getattr(args, "algorithm", None),
        "bootstrap.n": getattr(args, "n", None),
        "bootstrap.mode": getattr(args, "mode", None),
        "bootstrap.jobs": getattr(args, "jobs", None),
        "tefi.n_draws": getattr(args, "n_draws", None),
    }
    cfg = override(cfg, **ov)
    cfg.validate(need_input=need_input)
    return cfg


def cmd_describe(args, cfg, art):
    with stage("load"):
        matrix, report = _load(cfg)
        sets = _reference_sets(cfg, matrix)
    with stage("describe"):
        _stage_describe(art, matrix, report, sets)


def cmd_corr(args, cfg, art):
    with stage("load"):
        matrix, _ = _load(cfg)
    with stage("correlogram"):
        _stage_corr(art, matrix, cfg.correlation)


def cmd_cfa(args, cfg, art):
    if cfg.cfa_model is None:
        raise StageError("config", EXIT_CONFIG, "cfa needs a model spec (--model or cfa_model)")
    with stage("load"):
        matrix, _ = _load(cfg)
    with stage("cfa"):
        _stage_cfa(art, matrix, cfg.cfa_model, cfg.seed)


def cmd_ega(args, cfg, art):
    with stage("load"):
        matrix, _ = _load(cfg)
        sets = _reference_sets(cfg, matrix)
    with stage("ega"):
        _stage_ega(art, matrix, cfg, sets)


def cmd_boot(args, cfg, art):
    with stage("load"):
        matrix, _ = _load(cfg)
    with stage("bootstrap"):
        _stage_boot(art, matrix, cfg, cfg.seed)


def cmd_uva(args, cfg, art):
    with stage("load"):
        matrix, _ = _load(cfg)
    with stage("ega"):
        res = run_ega(matrix, cfg.ega)
    with stage("uva"):
        _stage_uva(art, res)


def _partition_for(cfg, matrix, use_reference: bool):
    if use_reference and cfg.reference is not None:
        sets = _reference_sets(cfg, matrix)
        return partition_from_sets(sets, matrix.item_ids), sets, "reference"
    part = run_ega(matrix, cfg.ega).partition
    return part, part.as_factor_sets("EGA"), "ega"


def cmd_tefi(args, cfg, art):
    with stage("load"):
        matrix, _ = _load(cfg)
    with stage("partition"):
        part, _, _ = _partition_for(cfg, matrix, args.use_reference)
    with stage("tefi"):
        _stage_tefi(art, matrix, part, cfg, cfg.seed)


def cmd_compare(args, cfg, art):
    with stage("load"):
        matrix, _ = _load(cfg)
    with stage("partition"):
        part, sets, label = _partition_for(cfg, matrix, True)
    with stage("compare"):
        _stage_compare(art, matrix, sets, cfg, label)
        if label == "reference":
            ega_part = run_ega(matrix, cfg.ega).partition
            art.json("jaccard.json", compare_partitions(sets, ega_part, prefix_b="EGA"))
            cc = factor_score_correlogram(matrix, sets, ega_part, prefix_b="EGA")
            art.json("factor_score_correlogram.json", cc)
            art.text("factor_score_correlogram.svg", export.heatmap_svg(
                cc.tau, cc.rows, cc.cols, blank=cc.p_values >= 0.05, title="factor score correlations"))


def cmd_simulate(args, cfg, art):
    with stage("simulate"):
        phi = args.factor_correlation
        spec = block_spec(args.factors, args.items_per_factor, args.loading, args.n_rows, cfg.seed, phi,
                          args.categories, args.prefix)
        matrix = generate(spec)
        if args.cohorts > 0:
            rng = np.random.default_rng([cfg.seed, 1 << 20])
            labels = tuple(str(c) for c in rng.integers(1, args.cohorts + 1, matrix.n_respondents))
            matrix = type(matrix)(matrix.values, matrix.item_ids, matrix.scale_min, matrix.scale_max, labels)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "data.csv"
        write_csv(matrix, path)
        art.text(args.filename, path.read_text(encoding="utf-8"))
    model = {"factors": planted_sets(spec)}
    buf = io.StringIO()
    yaml.safe_dump(model, buf, sort_keys=False)
    art.text("model.yaml", buf.getvalue())
    art.json("generator.json", {"loadings": {k: list(v) for k, v in spec.loadings.items()},
                                "factor_correlations": spec.phi(), "n": spec.n, "seed": spec.seed,
                                "n_categories": spec.n_categories, "cohorts": args.cohorts})


def cmd_run(args, cfg, art):
    seeds = _sub_seeds(cfg.seed, 3)
    summary = ["# netpsych pipeline summary", ""]
    with stage("load"):
        matrix, report = _load(cfg)
        sets = _reference_sets(cfg, matrix)
    summary.append(f"- respondents: {matrix.n_respondents} (dropped {len(report.dropped_rows)}), "
                   f"items: {matrix.n_items}")
    with stage("describe"):
        _stage_describe(art, matrix, report, sets)
    with stage("correlogram"):
        _, cs = _stage_corr(art, matrix, cfg.correlation)
    summary.append(f"- {cs['method']} correlogram: {cs['n_negative']} negative, "
                   f"{cs['n_nonsignificant']} non-significant pairs")
    if cfg.cfa_model is not None:
        with stage("cfa"):
            fit = _stage_cfa(art, matrix, cfg.cfa_model, seeds[0])
        summary.append(f"- CFA: chi2 = {fit.chi_square:.3f}, df = {fit.df}, CFI = {fit.cfi:.3f}, "
                       f"RMSEA = {fit.rmsea:.3f}, SRMR = {fit.srmr:.3f}, "
                       f"{'rejected' if fit.rejected() else 'retained'}")
    with stage("ega"):
        ega_res, _ = _stage_ega(art, matrix, cfg, sets)
    summary.append(f"- EGA: {ega_res.n_communities} communities, lambda = {ega_res.network.lambda_selected:.4g}")
    with stage("bootstrap"):
        b = _stage_boot(art, matrix, cfg, seeds[1])
    summary.append(f"- bootEGA: median {b.median_dimensions} dimensions, minimum item stability "
                   f"{min(b.item_stability.values()):.2f}")
    with stage("uva"):
        rep = _stage_uva(art, ega_res)
    summary.append(f"- UVA: {len(rep.pairs)} pairs with wTO >= {rep.thresholds[0]}")
    with stage("tefi"):
        point, cmp_ = _stage_tefi(art, matrix, ega_res.partition, cfg, seeds[2])
    summary.append(f"- TEFI: EGA partition {cmp_.base_mean:.3f} vs random {cmp_.comparison_mean:.3f}, "
                   f"one-tailed p = {cmp_.p_one_tailed:.3g}")
    with stage("compare"):
        if sets is not None:
            cc = factor_score_correlogram(matrix, sets, ega_res.partition, prefix_b="EGA")
            art.json("factor_score_correlogram.json", cc)
            art.text("factor_score_correlogram.svg", export.heatmap_svg(
                cc.tau, cc.rows, cc.cols, blank=cc.p_values >= 0.05, title="factor score correlations"))
        comp_sets = sets if sets is not None else ega_res.partition.as_factor_sets("EGA")
        out = _stage_compare(art, matrix, comp_sets, cfg, "reference" if sets is not None else "ega")
    if out.get("by_cohort"):
        for block in out["by_cohort"]:
            kw = block["kruskal_wallis"]
            summary.append(f"- cohorts, {block['factor']}: KW = {kw['statistic']:.2f}, p = {kw['p']:.3f}")
    art.text("summary.md", "\n".join(summary) + "\n")


COMMANDS = {
    "describe": cmd_describe, "corr": cmd_corr, "cfa": cmd_cfa, "ega": cmd_ega, "boot": cmd_boot,
    "uva": cmd_uva, "tefi": cmd_tefi, "compare": cmd_compare, "simulate": cmd_simulate, "run": cmd_run,
}


def _input_args(p):
    p.add_argument("--input", "-i", help="questionnaire CSV")
    p.add_argument("--items", help="comma-separated item columns")
    p.add_argument("--item-prefix", help="select item columns by name prefix")
    p.add_argument("--cohort-column")
    p.add_argument("--reference", help="reference allocation YAML (factors: {name: [items]})")


def _ega_args(p):
    p.add_argument("--ega-method", choices=["auto", "kendall_tau_b", "pearson", "spearman", "polychoric"],
                   help="correlation used for the network")
    p.add_argument("--gamma", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--algorithm", choices=["walktrap", "louvain"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netpsych", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    ps = {}
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", help="pipeline YAML")
        p.add_argument("--out", "-o", help="output directory (env NETPSYCH_OUTPUT_DIR)")
        ps[name] = p
    for name in ("describe", "corr", "cfa", "ega", "boot", "uva", "tefi", "compare", "run"):
        _input_args(ps[name])
    for name in ("ega", "boot", "uva", "tefi", "compare", "run"):
        _ega_args(ps[name])
    for name in ("boot", "tefi", "simulate", "run", "cfa"):
        ps[name].add_argument("--seed", type=int)
    for name in ("corr", "run"):
        ps[name].add_argument("--method", choices=["auto", "kendall_tau_b", "pearson", "spearman", "polychoric"],
                              help="correlogram coefficient")
    for name in ("cfa", "run"):
        ps[name].add_argument("--model", help="CFA model YAML (factors: {name: [items]})")
    for name in ("boot", "run"):
        ps[name].add_argument("--n", type=int, help="bootstrap replications")
        ps[name].add_argument("--mode", choices=["nonparametric", "parametric"])
        ps[name].add_argument("--jobs", type=int)
    for name in ("tefi", "run"):
        ps[name].add_argument("--n-draws", type=int)
    ps["tefi"].add_argument("--use-reference", action="store_true",
                            help="score the reference allocation instead of the EGA partition")
    s = ps["simulate"]
    s.add_argument("--factors", type=int, default=2)
    s.add_argument("--items-per-factor", type=int, default=5)
    s.add_argument("--loading", type=float, default=0.7)
    s.add_argument("--factor-correlation", type=float, default=0.3)
    s.add_argument("--n-rows", type=int, default=1000)
    s.add_argument("--categories", type=int, default=5)
    s.add_argument("--cohorts", type=int, default=0, help="add a random cohort column with this many levels")
    s.add_argument("--prefix", default="i")
    s.add_argument("--filename", default="data.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with stage("config"):
            cfg = _prepare(args, need_input=args.command != "simulate")
        seeded = args.command in ("boot", "tefi", "simulate", "run", "cfa")
        art = Artifacts(args.command, cfg.to_dict(), cfg.seed if seeded else None)
        COMMANDS[args.command](args, cfg, art)
        with stage("write"):
            manifest = art.commit(cfg.resolved_output())
    except StageError as exc:
        print(f"netpsych: error {exc}", file=sys.stderr)
        return exc.exit_code
    print(manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
