"""Scoring, aggregate metrics, paired significance, and the run manifest.

Accuracy and rates are kept as exact integer ratios; display strings round
half-up at fixed precision (2 decimals for accuracy, 1 for rates) so a given
ratio always renders the same way. McNemar uses the continuity-corrected
statistic with a 1-df chi-square upper tail computed from a rational erfc
approximation (fractional error <= 1.2e-7), checked in tests against the
stdlib erfc.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from falsirag.corpus import BenchmarkItem, CacheManifest
from falsirag.gateway.core import Gateway
from falsirag.pipeline import PipelineTrace


def _erfc_rational(x: float) -> float:
    """Complementary error function via a Chebyshev-fitted rational form."""
    z = abs(x)
    t = 1.0 / (1.0 + 0.5 * z)
    ans = t * math.exp(
        -z * z
        - 1.26551223
        + t * (1.00002368
        + t * (0.37409196
        + t * (0.09678418
        + t * (-0.18628806
        + t * (0.27886807
        + t * (-1.13520398
        + t * (1.48851587
        + t * (-0.82215223
        + t * 0.17087277))))))))
    )
    return ans if x >= 0.0 else 2.0 - ans


def chi_square_1df_sf(x: float) -> float:
    """Upper-tail probability of a 1-df chi-square at x.

    Equals erfc(sqrt(x/2)), clamped into (0, 1] because the rational
    approximation overshoots 1 by ~3e-8 near zero.
    """
    if x < 0:
        raise ValueError(f"chi-square statistic must be nonnegative, got {x}")
    return min(1.0, _erfc_rational(math.sqrt(x / 2.0)))


def display_percent(numerator: int, denominator: int, places: int) -> str:
    """Percentage rendered with half-up rounding at the given precision."""
    if denominator <= 0:
        raise ValueError("denominator must be positive")
    value = Decimal(numerator) * 100 / Decimal(denominator)
    return str(value.quantize(Decimal(10) ** -places, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class RateStat:
    """Exact count ratio plus its fixed-precision display string."""

    numerator: int
    denominator: int
    display: str

    @property
    def value(self) -> float:
        return self.numerator / self.denominator

    def to_record(self) -> dict:
        return {
            "numerator": self.numerator,
            "denominator": self.denominator,
            "display": self.display,
        }


def accuracy(results: list["ItemResult"]) -> RateStat:
    """Fraction of correct results, displayed at 2 decimals."""
    if not results:
        raise ValueError("accuracy requires at least one result")
    n_correct = sum(1 for r in results if r.correct)
    return RateStat(n_correct, len(results), display_percent(n_correct, len(results), 2))


def falsification_rate(results: list["ItemResult"]) -> RateStat:
    """Fraction of results whose verdict triggered revision, at 1 decimal."""
    if not results:
        raise ValueError("falsification_rate requires at least one result")
    for r in results:
        if r.falsified is None:
            raise ValueError(
                f"result for question {r.question_id} lacks a falsified flag "
                f"(method {r.method!r}); falsification rate applies to fva runs"
            )
    n_falsified = sum(1 for r in results if r.falsified)
    return RateStat(n_falsified, len(results), display_percent(n_falsified, len(results), 1))


@dataclass(frozen=True)
class ItemResult:
    question_id: int
    method: str
    correct: bool
    falsified: bool | None
    category: str

    def to_record(self) -> dict:
        return {
            "question_id": self.question_id,
            "method": self.method,
            "correct": self.correct,
            "falsified": self.falsified,
            "category": self.category,
        }


@dataclass(frozen=True)
class McNemarResult:
    """Continuity-corrected paired test over discordant counts."""

    b: int  # method1 correct, method2 wrong
    c: int  # method1 wrong, method2 correct
    chi2: float
    p_value: float
    degenerate: bool = False

    def to_record(self) -> dict:
        return {
            "b": self.b,
            "c": self.c,
            "chi2": self.chi2,
            "p_value": self.p_value,
            "degenerate": self.degenerate,
        }


def mcnemar_counts(b: int, c: int) -> McNemarResult:
    """McNemar statistic from discordant counts.

    chi2 = (|b - c| - 1)^2 / (b + c); b + c = 0 yields the degenerate
    result (chi2 0, p 1) instead of an error so sweeps never crash.
    """
    if b < 0 or c < 0:
        raise ValueError("discordant counts must be nonnegative")
    if b + c == 0:
        return McNemarResult(b=b, c=c, chi2=0.0, p_value=1.0, degenerate=True)
    chi2 = (abs(b - c) - 1.0) ** 2 / (b + c)
    return McNemarResult(b=b, c=c, chi2=chi2, p_value=chi_square_1df_sf(chi2))


def mcnemar(pairs: list[tuple[bool, bool]]) -> McNemarResult:
    """McNemar test over paired per-question correctness."""
    if not pairs:
        raise ValueError("mcnemar requires at least one pair")
    b = sum(1 for first, second in pairs if first and not second)
    c = sum(1 for first, second in pairs if not first and second)
    return mcnemar_counts(b, c)


@dataclass(frozen=True)
class CategoryRow:
    category: str
    count: int
    intervention: RateStat | None
    accuracy_by_method: dict

    def to_record(self) -> dict:
        return {
            "category": self.category,
            "count": self.count,
            "intervention": self.intervention.to_record() if self.intervention else None,
            "accuracy_by_method": {
                method: stat.to_record() for method, stat in sorted(self.accuracy_by_method.items())
            },
        }


def score_run(
    traces: list[PipelineTrace],
    items: list[BenchmarkItem],
    gateway: Gateway,
) -> list[ItemResult]:
    """Judge each trace's final answer against its item's references.

    Failed traces are counted incorrect without a judge call. Trace order is
    preserved; every trace must map to exactly one item.
    """
    by_id = {item.question_id: item for item in items}
    results: list[ItemResult] = []
    for trace in traces:
        item = by_id.get(trace.question_id)
        if item is None:
            raise ValueError(f"trace question_id {trace.question_id} has no benchmark item")
        falsified: bool | None = None
        if trace.method == "fva":
            falsified = bool(trace.verdict and trace.verdict.status == "Falsified")
        if trace.failed or not trace.final:
            correct = False
        else:
            correct = gateway.judge(item.question, trace.final, item)
        results.append(
            ItemResult(
                question_id=trace.question_id,
                method=trace.method,
                correct=correct,
                falsified=falsified,
                category=item.category,
            )
        )
    return results


def category_breakdown(
    results: list[ItemResult],
    items: list[BenchmarkItem],
) -> list[CategoryRow]:
    """Per-category counts, intervention rate (from fva results), and
    per-method accuracy; rows ordered by count descending, name ascending.
    """
    by_id = {item.question_id: item for item in items}
    categories: dict[str, list[ItemResult]] = {}
    for result in results:
        if result.question_id not in by_id:
            raise ValueError(f"result question_id {result.question_id} has no benchmark item")
        categories.setdefault(result.category, []).append(result)

    rows: list[CategoryRow] = []
    for category, cat_results in categories.items():
        item_ids = {r.question_id for r in cat_results}
        count = len(item_ids)
        fva_results = [r for r in cat_results if r.method == "fva"]
        intervention = None
        if fva_results:
            n_falsified = sum(1 for r in fva_results if r.falsified)
            intervention = RateStat(
                n_falsified, len(fva_results), display_percent(n_falsified, len(fva_results), 1)
            )
        acc: dict[str, RateStat] = {}
        for method in sorted({r.method for r in cat_results}):
            method_results = [r for r in cat_results if r.method == method]
            acc[method] = accuracy(method_results)
        rows.append(
            CategoryRow(
                category=category, count=count, intervention=intervention, accuracy_by_method=acc
            )
        )
    rows.sort(key=lambda row: (-row.count, row.category))
    return rows


def config_digest(semantic_config: dict) -> str:
    canonical = json.dumps(semantic_config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def emit_manifest(
    semantic_config: dict,
    model_ids: dict,
    template_digests: dict,
    dataset_fingerprint: CacheManifest,
    dataset_items: int,
    cache_manifests: dict[str, CacheManifest],
    frozen: bool,
) -> dict:
    """Auditable run manifest: model ids, template digests, dataset and
    cache fingerprints, and the digest of the effective config.
    """
    if frozen and not cache_manifests:
        raise ValueError("frozen mode requires at least one cache manifest")
    return {
        "schema_version": 1,
        "model_ids": dict(sorted(model_ids.items())),
        "templates": dict(sorted(template_digests.items())),
        "dataset": {**dataset_fingerprint.to_record(), "n_items": dataset_items},
        "caches": {label: m.to_record() for label, m in sorted(cache_manifests.items())},
        "config": semantic_config,
        "config_digest": config_digest(semantic_config),
    }


@dataclass
class EvalReport:
    accuracy_by_method: dict
    falsification: RateStat | None
    categories: list[CategoryRow]
    mcnemar_rows: list[dict]
    manifest: dict

    def to_record(self) -> dict:
        return {
            "schema_version": 1,
            "accuracy": {m: s.to_record() for m, s in sorted(self.accuracy_by_method.items())},
            "falsification_rate": self.falsification.to_record() if self.falsification else None,
            "categories": [row.to_record() for row in self.categories],
            "mcnemar": self.mcnemar_rows,
            "manifest": self.manifest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def render_text(self) -> str:
        """Aligned text tables: overall results, then category breakdown."""
        lines = ["== Overall =="]
        header = f"{'method':<10} {'accuracy':>10} {'intervention':>13}"
        lines.append(header)
        lines.append("-" * len(header))
        for method in sorted(self.accuracy_by_method):
            acc = self.accuracy_by_method[method]
            intervention = (
                f"{self.falsification.display}%"
                if (method == "fva" and self.falsification)
                else "--"
            )
            lines.append(f"{method:<10} {acc.display + '%':>10} {intervention:>13}")
        if self.mcnemar_rows:
            lines.append("")
            lines.append("== Paired McNemar ==")
            header = f"{'pair':<22} {'b':>5} {'c':>5} {'chi2':>9} {'p':>12}"
            lines.append(header)
            lines.append("-" * len(header))
            for row in self.mcnemar_rows:
                pair = f"{row['method1']} vs {row['method2']}"
                lines.append(
                    f"{pair:<22} {row['b']:>5} {row['c']:>5} "
                    f"{row['chi2']:>9.3f} {row['p_value']:>12.3e}"
                )
        if self.categories:
            lines.append("")
            lines.append("== Categories ==")
            methods = sorted(self.accuracy_by_method)
            header = f"{'category':<24} {'count':>5} {'int.rate':>9}" + "".join(
                f" {m:>9}" for m in methods
            )
            lines.append(header)
            lines.append("-" * len(header))
            for row in self.categories:
                intervention = f"{row.intervention.display}%" if row.intervention else "--"
                cells = ""
                for m in methods:
                    stat = row.accuracy_by_method.get(m)
                    cells += f" {(stat.display + '%') if stat else '--':>9}"
                lines.append(f"{row.category:<24} {row.count:>5} {intervention:>9}" + cells)
        return "\n".join(lines) + "\n"


def build_report(
    results_by_method: dict[str, list[ItemResult]],
    items: list[BenchmarkItem],
    manifest: dict,
) -> EvalReport:
    """Assemble the full report from per-method results.

    Result sets must cover the same question ids; McNemar rows are produced
    for every unordered method pair.
    """
    if not results_by_method:
        raise ValueError("no results to report")
    id_sets = {
        method: frozenset(r.question_id for r in results)
        for method, results in results_by_method.items()
    }
    reference = next(iter(id_sets.values()))
    for method, ids in id_sets.items():
        if ids != reference:
            raise ValueError(
                f"method {method!r} covers a different question set than the others"
            )

    accuracy_by_method = {m: accuracy(rs) for m, rs in results_by_method.items()}
    falsification = None
    if "fva" in results_by_method:
        falsification = falsification_rate(results_by_method["fva"])

    mcnemar_rows = []
    methods = sorted(results_by_method)
    for i, m1 in enumerate(methods):
        for m2 in methods[i + 1:]:
            correct1 = {r.question_id: r.correct for r in results_by_method[m1]}
            correct2 = {r.question_id: r.correct for r in results_by_method[m2]}
            pairs = [(correct1[qid], correct2[qid]) for qid in sorted(correct1)]
            outcome = mcnemar(pairs)
            mcnemar_rows.append({"method1": m1, "method2": m2, **outcome.to_record()})

    all_results = [r for rs in results_by_method.values() for r in rs]
    categories = category_breakdown(all_results, items)
    return EvalReport(
        accuracy_by_method=accuracy_by_method,
        falsification=falsification,
        categories=categories,
        mcnemar_rows=mcnemar_rows,
        manifest=manifest,
    )
