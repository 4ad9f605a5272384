"""Evaluation report assembly, serialization and scree exports."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from . import factor as fa
from .data import KNOWLEDGE, ScoredTest
from .errors import DataError, DegenerateInputError
from .fairness import dtf_summary, facility_by_group, logistic_dif, mantel_haenszel_dif
from .items import item_report
from .reliability import cronbach_alpha, sem, split_half, test_retest
from .standardize import NormReference, normalize, standardize_scores
from .stats import correlation_matrix
from .validity import concurrent_validity, differential_validity, predictive_validity

SCHEMA_VERSION = 1

PILOT_MINIMUM = 30
OBSERVATIONS_PER_ITEM = 5


def warn_small_sample(n: int, context: dict | None = None) -> list:
    """Sample-size advisories; these never stop an analysis.

    ``context`` may hold ``n_items`` (turns on the EFA check) and
    ``indicators_per_factor`` (items at threshold for each retained factor).
    """
    context = context or {}
    advisories = []
    if n < PILOT_MINIMUM:
        advisories.append(
            f"sample size {n} is below the pilot-study minimum of {PILOT_MINIMUM} participants"
        )
    n_items = context.get("n_items")
    if n_items and n < OBSERVATIONS_PER_ITEM * n_items:
        advisories.append(
            f"EFA: {n} participants for {n_items} items is fewer than "
            f"{OBSERVATIONS_PER_ITEM} observations per item"
        )
    for factor, count in enumerate(context.get("indicators_per_factor", ()), start=1):
        if count < fa.MIN_ITEMS_PER_FACTOR:
            advisories.append(
                f"EFA: factor {factor} has {count} indicator item(s); at least "
                f"{fa.MIN_ITEMS_PER_FACTOR} are recommended"
            )
    return advisories


def jsonable(obj):
    """Convert numpy and container types into plain JSON values (NaN/inf -> None)."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(jsonable(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def new_report(command: str, config_echo: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "psyeval",
        "tool_version": __version__,
        "command": command,
        "config": config_echo,
        "advisories": [],
    }


def dataset_section(matrix, scored: ScoredTest) -> dict:
    return {
        "n_participants": scored.n_participants,
        "n_items": scored.n_items,
        "items": list(scored.items),
        "n_dropped": matrix.n_dropped,
        "test_type": scored.test_type,
    }


def item_section(scored: ScoredTest, cfg) -> list:
    stats = item_report(
        scored,
        knowledge_threshold=cfg["items"]["knowledge_low_variance"],
        likert_threshold=cfg["items"]["likert_low_variance"],
    )
    return [
        {
            "item": s.item,
            "facility": s.facility,
            "variance": s.variance,
            "discrimination": s.discrimination,
            "discrimination_uncorrected": s.discrimination_uncorrected,
            "flags": sorted(s.flags),
        }
        for s in stats
    ]


def _solution_dict(sol: fa.FactorSolution) -> dict:
    return {
        "method": sol.method,
        "rotation": sol.rotation,
        "items": list(sol.items),
        "loadings": sol.loadings,
        "communalities": sol.communalities,
        "uniquenesses": sol.uniquenesses,
        "eigenvalues": sol.eigenvalues,
        "explained_variance": sol.explained_variance,
        "factor_correlations": sol.factor_correlations,
        "heywood": list(sol.heywood),
        "iterations": sol.iterations,
        "converged": sol.converged,
        "notices": list(sol.notices),
    }


def efa_section(scored: ScoredTest, cfg, seed: int):
    """Extraction advice, PCA first look, fitted and rotated solution.

    Returns ``(section, advice, advisories)``.
    """
    e = cfg["efa"]
    method = cfg["analysis"]["correlation"]
    advice = fa.advise_extraction(
        scored,
        max_k=e["max_k"],
        replicates=e["replicates"],
        criterion=e["criterion"],
        seed=seed,
        method=method,
        n_factors=e["n_factors"],
    )
    c = correlation_matrix(scored, method)
    k = advice.chosen_count
    first_look = fa.pca(c, k)
    if e["method"] == "paf":
        sol = fa.paf_or_last(c, k, tol=e["paf_tol"], max_iter=e["paf_max_iter"])
    else:
        sol = first_look
    if e["rotation"] == "promax":
        sol = fa.rotate_promax(sol, power=e["promax_power"], kaiser_normalize=e["kaiser_normalize"])
    elif e["rotation"] == "varimax":
        sol = fa.rotate_varimax(sol, kaiser_normalize=e["kaiser_normalize"])
    flags = fa.crossloading_flags(sol, e["loading_threshold"])
    indicators = (np.abs(sol.loadings) >= e["loading_threshold"]).sum(axis=0)
    pa = advice.parallel
    section = {
        "correlation_method": method,
        "correlation_matrix": c.values,
        "extraction": {
            "k1_count": advice.k1_count,
            "scree": [{"index": i, "eigenvalue": v} for i, v in advice.scree_table],
            "vss": {str(kk): v for kk, v in advice.vss_table.items()},
            "vss_count": advice.vss_count,
            "parallel": {
                "count": pa.count,
                "criterion": pa.criterion,
                "replicates": pa.replicates,
                "seed": pa.seed,
                "observed": pa.observed,
                "random_mean": pa.random_mean,
                "random_p95": pa.random_p95,
            },
            "chosen_count": advice.chosen_count,
            "provenance": advice.provenance,
        },
        "pca": {"eigenvalues": first_look.eigenvalues, "loadings": first_look.loadings},
        "solution": _solution_dict(sol),
        "flags": {
            "items": {item: sorted(f) for item, f in flags.items.items()},
            "underidentified_factors": [f + 1 for f in flags.underidentified],
        },
    }
    advisories = warn_small_sample(
        scored.n_participants,
        {"n_items": scored.n_items, "indicators_per_factor": indicators.tolist()},
    )
    return section, advice, advisories


def standardization_section(scored: ScoredTest, cfg) -> dict:
    s = cfg["standardization"]
    totals = scored.totals
    if s["transform"] != "none":
        totals = normalize(totals, s["transform"])
    if s["norm_mean"] is not None or s["norm_sd"] is not None:
        if s["norm_mean"] is None or s["norm_sd"] is None:
            raise DataError("external norms need both norm_mean and norm_sd")
        norm, source = NormReference(s["norm_mean"], s["norm_sd"]), "config"
    else:
        norm, source = NormReference.from_sample(totals), "sample"
    out = standardize_scores(totals, norm)
    return {
        "norm": {"mean": norm.mean, "sd": norm.sd, "source": source},
        "transform": s["transform"],
        "scores": [
            {
                "participant": pid,
                "raw": float(raw),
                "z": float(z),
                "t": float(t),
                "stanine": int(st),
                "sten": int(sn),
            }
            for pid, raw, z, t, st, sn in zip(
                scored.participants, scored.totals, out["z"], out["t"], out["stanine"], out["sten"]
            )
        ],
    }


def reliability_section(scored: ScoredTest, cfg, retest: ScoredTest | None = None) -> dict:
    r = cfg["reliability"]
    section = {}
    primary = None
    if scored.n_items >= 2:
        alpha = cronbach_alpha(scored)
        section["cronbach_alpha"] = {
            "value": alpha.value,
            "n": alpha.n,
            "alpha_if_deleted": alpha.auxiliary["alpha_if_deleted"],
        }
        primary = ("cronbach_alpha", alpha.value)
        try:
            sh = split_half(scored, method=cfg["analysis"]["correlation"])
            section["split_half"] = {"value": sh.value, "n": sh.n, **sh.auxiliary}
        except DegenerateInputError as exc:
            section["split_half"] = {"error": str(exc)}
    if retest is not None:
        tr = test_retest(scored, retest, r["retest_method"])
        section["test_retest"] = {"value": tr.value, "raw_value": tr.raw_value, "n": tr.n, "method": r["retest_method"]}
        primary = ("test_retest", tr.value)
    if primary is not None:
        source, value = primary
        reliability = min(max(value, 0.0), 1.0)
        err = sem(scored, reliability, r["sem_form"])
        section["sem"] = {
            "form": err.form,
            "reliability_source": source,
            "reliability": reliability,
            "sem": err.sem,
            "ci95_half_width": err.ci_half_width,
        }
    return section


def validity_section(scored: ScoredTest, cfg, other: ScoredTest | None = None) -> dict:
    v = cfg["validity"]
    method = v["method"]
    totals = scored.totals
    section = {}
    aux = scored.auxiliary
    if v["criterion_column"]:
        rep = predictive_validity(totals, aux[v["criterion_column"]], method)
        section["predictive"] = {"correlation": rep.correlation, "n": rep.n, "meets_threshold": rep.meets_threshold}
    existing = None
    if v["existing_column"]:
        existing = aux[v["existing_column"]]
    elif other is not None:
        position = {pid: i for i, pid in enumerate(other.participants)}
        missing = [p for p in scored.participants if p not in position]
        if missing:
            raise DataError(f"second input lacks participants: {', '.join(missing[:10])}")
        existing = other.totals[[position[p] for p in scored.participants]]
    if existing is not None:
        rep = concurrent_validity(totals, existing, method)
        section["concurrent"] = {"correlation": rep.correlation, "n": rep.n}
    if v["convergent_column"] and v["discriminant_column"]:
        dv = differential_validity(
            totals, aux[v["convergent_column"]], aux[v["discriminant_column"]], method, v["concern_margin"]
        )
        section["differential"] = {
            "convergent": dv.convergent.correlation,
            "discriminant": dv.discriminant.correlation,
            "discrepancy": dv.discrepancy,
            "concern": dv.concern,
        }
    return section


def _dichotomized(scored: ScoredTest, threshold):
    if scored.test_type == KNOWLEDGE or np.isin(scored.values, (0.0, 1.0)).all():
        return scored
    if threshold is None:
        return None
    values = (scored.values >= threshold).astype(float)
    return ScoredTest(
        participants=scored.participants,
        items=scored.items,
        values=values,
        test_type=scored.test_type,
        labels=scored.labels,
        auxiliary=scored.auxiliary,
    )


def fairness_section(scored: ScoredTest, groups, cfg) -> dict:
    f = cfg["fairness"]
    section = {"facility_by_group": facility_by_group(scored, groups)}
    binary = _dichotomized(scored, f["dichotomize_threshold"])
    if binary is None:
        section["notice"] = (
            "items are not dichotomous; set [fairness] dichotomize_threshold to run DIF"
        )
        return section
    if binary is not scored:
        section["dichotomize_threshold"] = f["dichotomize_threshold"]
    results, errors = [], {}
    for item in binary.items:
        try:
            results.append(
                mantel_haenszel_dif(binary, groups, item, f["n_strata"], f["alpha"], f["reference_group"])
            )
            results.extend(logistic_dif(binary, groups, item, f["alpha"], f["reference_group"]))
        except (DataError, ArithmeticError) as exc:
            errors[item] = str(exc)
    summary = dtf_summary(results, threshold=f["dtf_threshold"])
    section["dif"] = [
        {
            "item": r.item,
            "method": r.method,
            "statistic": r.statistic,
            "p_value": r.p_value,
            "effect": r.effect,
            "flagged": r.flagged,
            **(r.details or {}),
        }
        for r in results
    ]
    section["dif_errors"] = errors
    section["dtf"] = {"per_method": summary.per_method, "warning": summary.warning, "threshold": summary.threshold}
    return section


def scree_csv(advice: fa.ExtractionAdvice) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "eigenvalue", "random_mean", "random_p95"])
    pa = advice.parallel
    for (index, value), mean, p95 in zip(advice.scree_table, pa.random_mean, pa.random_p95):
        writer.writerow([index, repr(float(value)), repr(float(mean)), repr(float(p95))])
    return buf.getvalue()


def scree_svg(advice: fa.ExtractionAdvice, width: int = 480, height: int = 320) -> str:
    """Line chart of observed eigenvalues against the random-data reference."""
    observed = np.array([v for _, v in advice.scree_table])
    series = {
        "observed": (observed, "#1f77b4"),
        "random mean": (advice.parallel.random_mean, "#d62728"),
        "random p95": (advice.parallel.random_p95, "#ff7f0e"),
    }
    k = observed.size
    top = max(float(np.max(s)) for s, _ in series.values()) * 1.05 or 1.0
    left, right, upper, lower = 50, 20, 20, 40
    pw, ph = width - left - right, height - upper - lower

    def xy(i, v):
        x = left + (pw * i / (k - 1) if k > 1 else pw / 2)
        y = upper + ph * (1 - v / top)
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="{left}" y="{upper}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>',
        f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle" font-size="12">factor</text>',
        f'<text x="14" y="{upper + ph / 2}" font-size="12" transform="rotate(-90 14 {upper + ph / 2})" '
        f'text-anchor="middle">eigenvalue</text>',
    ]
    one = upper + ph * (1 - 1 / top)
    parts.append(f'<line x1="{left}" y1="{one:.2f}" x2="{left + pw}" y2="{one:.2f}" stroke="#bbb" stroke-dasharray="4 3"/>')
    for n, (name, (values, color)) in enumerate(series.items()):
        points = " ".join(xy(i, v) for i, v in enumerate(values))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>')
        parts.append(
            f'<text x="{left + pw - 5}" y="{upper + 15 + 14 * n}" text-anchor="end" font-size="11" '
            f'fill="{color}">{name}</text>'
        )
    for i in range(k):
        x = xy(i, 0).split(",")[0]
        parts.append(f'<text x="{x}" y="{upper + ph + 14}" text-anchor="middle" font-size="10">{i + 1}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _g(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render_text(report: dict) -> str:
    """Human-readable rendering of a report dictionary."""
    lines = [f"psyeval {report['tool_version']} - {report['command']}"]
    ds = report.get("dataset")
    if ds:
        lines.append(
            f"dataset: {ds['n_participants']} participants, {ds['n_items']} items "
            f"({ds['test_type']}), {ds['n_dropped']} rows dropped for missing data"
        )
    for adv in report.get("advisories", []):
        lines.append(f"advisory: {adv}")

    items = report.get("item_analysis")
    if items:
        lines += ["", "Item analysis", f"{'item':<12}{'facility':>12}{'variance':>12}{'disc':>12}{'disc(raw)':>12}  flags"]
        for s in items:
            lines.append(
                f"{s['item']:<12}{_g(s['facility']):>12}{_g(s['variance']):>12}"
                f"{_g(s['discrimination']):>12}{_g(s['discrimination_uncorrected']):>12}  {', '.join(s['flags'])}"
            )

    efa = report.get("efa")
    if efa:
        ex = efa["extraction"]
        lines += [
            "",
            "Exploratory factor analysis",
            f"K1 count: {ex['k1_count']}   VSS count: {ex['vss_count']}   "
            f"parallel analysis ({ex['parallel']['criterion']}): {ex['parallel']['count']}",
            f"chosen number of factors: {ex['chosen_count']} ({ex['provenance']})",
            "scree: " + ", ".join(_g(s["eigenvalue"]) for s in ex["scree"]),
        ]
        sol = efa["solution"]
        lines.append(f"solution: {sol['method']} + {sol['rotation']}")
        header = f"{'item':<12}" + "".join(f"{'F' + str(j + 1):>12}" for j in range(len(sol["loadings"][0]))) + f"{'h2':>12}{'u2':>12}"
        lines.append(header)
        for item, row, h2, u2 in zip(sol["items"], sol["loadings"], sol["communalities"], sol["uniquenesses"]):
            lines.append(f"{item:<12}" + "".join(f"{_g(v):>12}" for v in row) + f"{_g(h2):>12}{_g(u2):>12}")
        if sol["rotation"] == "promax":
            lines.append("factor correlations:")
            for row in sol["factor_correlations"]:
                lines.append("  " + "".join(f"{_g(v):>12}" for v in row))
        flagged = {i: f for i, f in efa["flags"]["items"].items() if f}
        for item, f in flagged.items():
            lines.append(f"flag: {item}: {', '.join(f)}")
        for f in efa["flags"]["underidentified_factors"]:
            lines.append(f"flag: factor {f} has fewer than 3 items at the loading threshold")
        for notice in sol["notices"]:
            lines.append(f"notice: {notice}")

    st = report.get("standardization")
    if st:
        norm = st["norm"]
        lines += ["", "Standardization", f"norm ({norm['source']}): mean {_g(norm['mean'])}, sd {_g(norm['sd'])}"]
        for s in st["scores"][:20]:
            lines.append(
                f"  {s['participant']}: raw {_g(s['raw'])}  z {_g(s['z'])}  T {_g(s['t'])}  "
                f"stanine {s['stanine']}  sten {s['sten']}"
            )
        if len(st["scores"]) > 20:
            lines.append(f"  ... {len(st['scores']) - 20} more in the JSON report")

    rel = report.get("reliability")
    if rel:
        lines += ["", "Reliability"]
        if "cronbach_alpha" in rel:
            lines.append(f"Cronbach's alpha: {_g(rel['cronbach_alpha']['value'])}")
        sh = rel.get("split_half")
        if sh:
            lines.append(
                f"split-half (odd/even, Spearman-Brown): {_g(sh.get('value'))}"
                + (f"  [r_half {_g(sh['r_half'])}]" if "r_half" in sh else f"  [{sh.get('error')}]")
            )
        if "test_retest" in rel:
            tr = rel["test_retest"]
            lines.append(f"test-retest: {_g(tr['value'])} (raw {_g(tr['raw_value'])})")
        if "sem" in rel:
            s = rel["sem"]
            lines.append(
                f"SEM ({s['form']}, from {s['reliability_source']}): {_g(s['sem'])}; "
                f"95% CI: score +/- {_g(s['ci95_half_width'])}"
            )

    val = report.get("validity")
    if val:
        lines += ["", "Validity"]
        if "predictive" in val:
            p = val["predictive"]
            lines.append(f"predictive: r = {_g(p['correlation'])} (r > 0.5: {'yes' if p['meets_threshold'] else 'no'})")
        if "concurrent" in val:
            lines.append(f"concurrent: r = {_g(val['concurrent']['correlation'])}")
        if "differential" in val:
            d = val["differential"]
            lines.append(
                f"convergent r = {_g(d['convergent'])}, discriminant r = {_g(d['discriminant'])}, "
                f"discrepancy {_g(d['discrepancy'])}{'  CONCERN' if d['concern'] else ''}"
            )

    fair = report.get("fairness")
    if fair:
        lines += ["", "Fairness"]
        for item, entry in fair["facility_by_group"].items():
            per = ", ".join(f"{g} {_g(v)}" for g, v in entry["facility"].items())
            lines.append(f"  {item}: {per}  (max diff {_g(entry['max_difference'])})")
        if "notice" in fair:
            lines.append(f"notice: {fair['notice']}")
        for r in fair.get("dif", []):
            if r["flagged"]:
                lines.append(f"DIF flagged: {r['item']} ({r['method']}, p = {_g(r['p_value'])})")
        for item, err in fair.get("dif_errors", {}).items():
            lines.append(f"DIF error: {item}: {err}")
        if "dtf" in fair:
            lines.append(f"DTF warning: {'yes' if fair['dtf']['warning'] else 'no'}")
    return "\n".join(lines) + "\n"


def write_outputs(report: dict, out_dir, stem: str, advice=None, svg: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / f"{stem}.json", "text": out / f"{stem}.txt"}
    paths["json"].write_text(dumps(report), encoding="utf-8")
    paths["text"].write_text(render_text(report), encoding="utf-8")
    if advice is not None:
        paths["scree_csv"] = out / "scree.csv"
        paths["scree_csv"].write_text(scree_csv(advice), encoding="utf-8")
        if svg:
            paths["scree_svg"] = out / "scree.svg"
            paths["scree_svg"].write_text(scree_svg(advice), encoding="utf-8")
    return paths
