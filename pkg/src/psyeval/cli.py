"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .data import PARTICIPANT_COLUMN, listwise_delete, load_csv, score
from .errors import ConfigError, DataError, NumericalError, PsyevalError
from .report import (
    dataset_section,
    dumps,
    efa_section,
    fairness_section,
    item_section,
    new_report,
    reliability_section,
    render_text,
    standardization_section,
    validity_section,
    warn_small_sample,
    write_outputs,
)
from .simulate import (
    FactorModelSpec,
    TrueScoreSpec,
    generate_dif_data,
    generate_factor_data,
    generate_retest_pair,
    simple_structure,
)

logger = logging.getLogger("psyeval")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = ("item-analysis", "efa", "standardize", "reliability", "validity", "dif", "simulate", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psyeval", description="Psychometric evaluation of test data.")
    parser.add_argument("--version", action="version", version=f"psyeval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file")
        if name != "simulate":
            p.add_argument("--input", required=True, help="respondents x items CSV")
            p.add_argument(
                "--input2",
                help="second administration (retest / parallel form / other instrument), same layout",
            )
        p.add_argument("--out-dir", default=".", help="directory for report files")
        p.add_argument("--seed", type=int, help="overrides [analysis] seed")
        p.add_argument("--format", choices=("json", "text"), default="text", help="stdout format")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load_scored(path, spec):
    matrix = listwise_delete(load_csv(path, spec))
    return matrix, score(matrix, spec)


def _groups(scored, spec):
    if not spec.group_column:
        raise ConfigError("[scale] group_column is required for DIF analyses")
    return np.asarray(scored.labels[spec.group_column], dtype=object)


def _simulate(args, cfg, seed):
    s = cfg["simulate"]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / "simulated.csv"
    if s["model"] == "retest":
        spec = TrueScoreSpec.from_reliability(s["n"], s["reliability"], seed=seed)
        first, second = generate_retest_pair(spec)
        for path, test in ((data_path, first), (out / "simulated_retest.csv", second)):
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow([PARTICIPANT_COLUMN, "score"])
                for pid, value in zip(test.participants, test.values[:, 0]):
                    writer.writerow([pid, repr(float(value))])
        sidecar = spec.to_dict()
    else:
        lam = simple_structure(s["n_factors"], s["items_per_factor"], s["loading"])
        phi = np.full((s["n_factors"], s["n_factors"]), s["factor_correlation"])
        np.fill_diagonal(phi, 1.0)
        likert = None
        if s["likert_min"] is not None or s["likert_max"] is not None:
            if s["likert_min"] is None or s["likert_max"] is None:
                raise ConfigError("[simulate] likert_min and likert_max go together")
            likert = (s["likert_min"], s["likert_max"])
        spec = FactorModelSpec(lam, n=s["n"], seed=seed, factor_correlations=phi, likert=likert)
        sidecar = spec.to_dict()
        groups = None
        if s["dif_items"] or s["dif_magnitude"]:
            dif = generate_dif_data(spec, s["dif_items"], s["dif_kind"], s["dif_magnitude"], s["group_split"])
            matrix, groups = dif.matrix, dif.matrix.labels["group"]
            sidecar["dif"] = {
                "items": list(s["dif_items"]),
                "kind": s["dif_kind"],
                "magnitude": s["dif_magnitude"],
                "group_split": s["group_split"],
            }
        else:
            matrix = generate_factor_data(spec)
        with data_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([PARTICIPANT_COLUMN, *matrix.items, *(["group"] if groups else [])])
            for i, pid in enumerate(matrix.participants):
                cells = [f"{v:g}" if likert else repr(float(v)) for v in matrix.values[i]]
                writer.writerow([pid, *cells, *([groups[i]] if groups else [])])
    sidecar_path = out / "simulated.spec.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"written": [str(data_path), str(sidecar_path)], "spec": sidecar}


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return _dispatch(args, stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PsyevalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _dispatch(args, stdout) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["analysis"]["seed"]
    cfg.set("analysis", "seed", seed)
    report = new_report(args.command, cfg.to_dict())

    if args.command == "simulate":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = _simulate(args, cfg, seed)
        report["advisories"].extend(str(w.message) for w in caught)
        report["simulate"] = result
        write_outputs(report, args.out_dir, "simulate")
        _emit(report, args.format, stdout)
        return EXIT_OK

    spec = cfg.scale_spec()
    matrix, scored = _load_scored(args.input, spec)
    second = _load_scored(args.input2, spec)[1] if args.input2 else None
    report["dataset"] = dataset_section(matrix, scored)
    report["advisories"].extend(warn_small_sample(scored.n_participants))
    advice = None
    cmd = args.command

    if cmd in ("item-analysis", "report"):
        report["item_analysis"] = item_section(scored, cfg)
    if cmd in ("efa", "report"):
        section, advice, advisories = efa_section(scored, cfg, seed)
        report["efa"] = section
        report["advisories"].extend(a for a in advisories if a not in report["advisories"])
    if cmd in ("standardize", "report"):
        report["standardization"] = standardization_section(scored, cfg)
    if cmd in ("reliability", "report"):
        report["reliability"] = reliability_section(scored, cfg, retest=second)
    if cmd == "validity" or (cmd == "report" and _validity_configured(cfg)):
        other = second if cmd == "validity" else None
        section = validity_section(scored, cfg, other)
        if cmd == "validity" and not section:
            raise ConfigError(
                "no validity data: set [validity] criterion/existing/convergent+discriminant columns or pass --input2"
            )
        report["validity"] = section
    if cmd == "dif" or (cmd == "report" and spec.group_column):
        report["fairness"] = fairness_section(scored, _groups(scored, spec), cfg)

    stem = "report" if cmd == "report" else cmd
    write_outputs(report, args.out_dir, stem, advice=advice, svg=cfg["efa"]["scree_svg"])
    _emit(report, args.format, stdout)
    return EXIT_OK


def _validity_configured(cfg) -> bool:
    v = cfg["validity"]
    return bool(v["criterion_column"] or v["existing_column"] or (v["convergent_column"] and v["discriminant_column"]))


def _emit(report, fmt, stdout):
    stdout.write(dumps(report) if fmt == "json" else render_text(report))


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
