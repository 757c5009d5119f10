"""Meaning-survey statistics: 15-question Likert scoring over five components.

Implements the quantitative instrument: per-question and per-component
descriptive statistics (box-whisker five-number summaries with Tukey
median-inclusive quartiles), Pearson product-moment correlation between
question pairs, and two-sided significance from the Student t distribution
computed via a continued-fraction regularized incomplete beta.

Sample standard deviation uses the n-1 denominator throughout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

NUM_QUESTIONS = 15
LIKERT_MIN, LIKERT_MAX = 1, 5
QUESTIONS_PER_COMPONENT = 3


class Component(Enum):
    CONNECTEDNESS = "connectedness"
    COHERENCE = "coherence"
    RESONANCE = "resonance"
    PURPOSE = "purpose"
    SIGNIFICANCE = "significance"


# Question->component anchors recoverable from the instrument's description;
# the remaining eight assignments below are an editorial completion and can
# be overridden with a component-map config file.
ANCHOR_ASSIGNMENTS = {
    1: Component.CONNECTEDNESS,
    5: Component.SIGNIFICANCE,
    6: Component.CONNECTEDNESS,
    7: Component.PURPOSE,
    8: Component.COHERENCE,
    9: Component.RESONANCE,
    12: Component.PURPOSE,
}

_DEFAULT_COMPONENTS = {
    Component.CONNECTEDNESS: (1, 2, 6),
    Component.COHERENCE: (3, 4, 8),
    Component.RESONANCE: (9, 10, 11),
    Component.PURPOSE: (7, 12, 13),
    Component.SIGNIFICANCE: (5, 14, 15),
}


class ResponseError(ValueError):
    """Raised for malformed questionnaire data, naming the participant."""


@dataclass(frozen=True)
class QuestionnaireResponse:
    participant_id: str
    answers: tuple[int, ...]

    def validate(self) -> "QuestionnaireResponse":
        if len(self.answers) != NUM_QUESTIONS:
            raise ResponseError(
                f"participant {self.participant_id}: expected {NUM_QUESTIONS} "
                f"answers, got {len(self.answers)}"
            )
        for q, a in enumerate(self.answers, start=1):
            if not isinstance(a, int) or not LIKERT_MIN <= a <= LIKERT_MAX:
                raise ResponseError(
                    f"participant {self.participant_id}: Q{q} answer {a!r} "
                    f"outside [{LIKERT_MIN}, {LIKERT_MAX}]"
                )
        return self


@dataclass(frozen=True)
class ComponentMap:
    """Total assignment of the 15 questions, exactly 3 per component."""

    assignment: dict[int, Component]

    def validate(self) -> "ComponentMap":
        expected = set(range(1, NUM_QUESTIONS + 1))
        if set(self.assignment) != expected:
            missing = sorted(expected - set(self.assignment))
            raise ValueError(f"component map is not total; missing {missing}")
        for comp in Component:
            n = sum(1 for c in self.assignment.values() if c is comp)
            if n != QUESTIONS_PER_COMPONENT:
                raise ValueError(f"{comp.value}: {n} questions, expected 3")
        return self

    def questions_for(self, comp: Component) -> list[int]:
        return sorted(q for q, c in self.assignment.items() if c is comp)


def default_component_map() -> ComponentMap:
    assignment = {
        q: comp for comp, qs in _DEFAULT_COMPONENTS.items() for q in qs
    }
    return ComponentMap(assignment).validate()


def load_component_map(path: str | Path) -> ComponentMap:
    """JSON config: {"components": {"connectedness": [1, 2, 6], ...}}."""
    import json

    doc = json.loads(Path(path).read_text())
    table = doc.get("components") if isinstance(doc, dict) else None
    if not isinstance(table, dict):
        raise ValueError(f"{path}: expected a 'components' table")
    assignment: dict[int, Component] = {}
    for name, questions in table.items():
        comp = Component(name.lower())
        for q in questions:
            q = int(q)
            if q in assignment:
                raise ValueError(f"{path}: question {q} assigned twice")
            assignment[q] = comp
    return ComponentMap(assignment).validate()


def load_responses_csv(path: str | Path) -> list[QuestionnaireResponse]:
    """CSV with header participant_id,q1..q15, one participant per row."""
    expected = ["participant_id"] + [f"q{i}" for i in range(1, NUM_QUESTIONS + 1)]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != expected:
            raise ResponseError(f"{path}: header must be {','.join(expected)}")
        responses = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            pid = row[0].strip()
            try:
                answers = tuple(int(cell) for cell in row[1:])
            except ValueError:
                raise ResponseError(
                    f"participant {pid}: non-integer answer in {row[1:]}"
                ) from None
            responses.append(QuestionnaireResponse(pid, answers).validate())
    return responses


# --- descriptive statistics -----------------------------------------------------


@dataclass(frozen=True)
class DescriptiveStats:
    mean: float
    sd: float | None
    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int


def mean_sd(samples) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sample")
    if x.size < 2:
        raise ValueError("sd undefined for a single observation")
    return float(x.mean()), float(x.std(ddof=1))


def _tukey_quartiles(sorted_x: np.ndarray) -> tuple[float, float]:
    """Median-inclusive hinges: odd-length halves include the median."""
    n = sorted_x.size
    half = (n + 1) // 2
    lower = sorted_x[:half]
    upper = sorted_x[n - half :]
    return float(np.median(lower)), float(np.median(upper))


def five_number_summary(samples) -> DescriptiveStats:
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sample")
    xs = np.sort(x)
    q1, q3 = _tukey_quartiles(xs)
    sd = float(x.std(ddof=1)) if x.size >= 2 else None
    return DescriptiveStats(
        mean=float(x.mean()),
        sd=sd,
        min=float(xs[0]),
        q1=q1,
        median=float(np.median(xs)),
        q3=q3,
        max=float(xs[-1]),
        n=int(x.size),
    )


def pearson_r(x, y) -> float:
    """Product-moment correlation; undefined for constant vectors."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    if xa.size < 3:
        raise ValueError("need at least 3 observations")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for a constant vector")
    r = float((dx * dy).sum() / (sx * sy))
    return max(-1.0, min(1.0, r))


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to about 1e-12 absolute accuracy."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def p_value_r(r: float, n: int) -> float:
    """Two-sided p for a correlation under the null, df = n - 2.

    Uses t = r * sqrt((n-2)/(1-r^2)) and the Student-t tail identity
    P(|T| >= t) = I_{df/(df+t^2)}(df/2, 1/2).
    """
    if n < 3:
        raise ValueError("need at least 3 observations")
    if not -1.0 <= r <= 1.0:
        raise ValueError("r must lie in [-1, 1]")
    if abs(r) == 1.0:
        return 0.0
    df = n - 2
    t2 = r * r * df / (1.0 - r * r)
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t2))


# --- reports ---------------------------------------------------------------------


@dataclass(frozen=True)
class SurveyReport:
    question_stats: dict[int, DescriptiveStats]
    component_stats: dict[Component, DescriptiveStats]
    n_participants: int


def _answer_matrix(responses: list[QuestionnaireResponse]) -> np.ndarray:
    if not responses:
        raise ResponseError("no responses")
    for resp in responses:
        resp.validate()
    return np.array([resp.answers for resp in responses], dtype=np.float64)


def component_report(
    responses: list[QuestionnaireResponse], cmap: ComponentMap | None = None
) -> SurveyReport:
    """Per-question stats over participants; per-component over pooled answers."""
    cmap = (cmap or default_component_map()).validate()
    matrix = _answer_matrix(responses)
    question_stats = {
        q: five_number_summary(matrix[:, q - 1]) for q in range(1, NUM_QUESTIONS + 1)
    }
    component_stats = {}
    for comp in Component:
        cols = [q - 1 for q in cmap.questions_for(comp)]
        pooled = matrix[:, cols].reshape(-1)
        component_stats[comp] = five_number_summary(pooled)
    return SurveyReport(
        question_stats=question_stats,
        component_stats=component_stats,
        n_participants=matrix.shape[0],
    )


@dataclass(frozen=True)
class CorrelationMatrix:
    r: np.ndarray  # (15, 15), nan where flagged
    p: np.ndarray  # (15, 15), nan where flagged
    constant: np.ndarray  # (15,) bool: question had a constant answer column


def correlation_matrix(responses: list[QuestionnaireResponse]) -> CorrelationMatrix:
    """Pairwise (r, p) across questions; constant columns are flagged."""
    matrix = _answer_matrix(responses)
    if matrix.shape[0] < 3:
        raise ResponseError("need at least 3 participants for correlations")
    constant = np.array([np.ptp(matrix[:, i]) == 0 for i in range(NUM_QUESTIONS)])
    r = np.full((NUM_QUESTIONS, NUM_QUESTIONS), np.nan)
    p = np.full((NUM_QUESTIONS, NUM_QUESTIONS), np.nan)
    n = matrix.shape[0]
    for i in range(NUM_QUESTIONS):
        r[i, i], p[i, i] = 1.0, 0.0
        for j in range(i + 1, NUM_QUESTIONS):
            if constant[i] or constant[j]:
                continue
            rij = pearson_r(matrix[:, i], matrix[:, j])
            pij = p_value_r(rij, n)
            r[i, j] = r[j, i] = rij
            p[i, j] = p[j, i] = pij
    return CorrelationMatrix(r=r, p=p, constant=constant)


def _fmt_sd(sd: float | None) -> str:
    return "undefined (n=1)" if sd is None else f"{sd:.2f}"


def render_report(report: SurveyReport, cmap: ComponentMap | None = None) -> str:
    """Human-readable summary; one line per question, then per component."""
    cmap = (cmap or default_component_map()).validate()
    lines = [f"Survey report ({report.n_participants} participants)", ""]
    lines.append("Per-question:")
    for q in sorted(report.question_stats):
        s = report.question_stats[q]
        lines.append(
            f"  Q{q} mean {s.mean:.2f} sd {_fmt_sd(s.sd)} "
            f"[min {s.min:.0f} | q1 {s.q1:.2f} | median {s.median:.2f} "
            f"| q3 {s.q3:.2f} | max {s.max:.0f}] ({cmap.assignment[q].value})"
        )
    lines.append("")
    lines.append("Per-component (pooled over 3 questions):")
    for comp in Component:
        s = report.component_stats[comp]
        lines.append(
            f"  {comp.value}: mean {s.mean:.2f} sd {_fmt_sd(s.sd)} "
            f"median {s.median:.2f} (n={s.n})"
        )
    return "\n".join(lines)


def report_to_dict(report: SurveyReport, cmap: ComponentMap | None = None) -> dict:
    """Machine-readable summary mirroring render_report."""
    cmap = (cmap or default_component_map()).validate()

    def stats_dict(s: DescriptiveStats) -> dict:
        return {
            "mean": s.mean,
            "sd": s.sd,
            "min": s.min,
            "q1": s.q1,
            "median": s.median,
            "q3": s.q3,
            "max": s.max,
            "n": s.n,
        }

    return {
        "participants": report.n_participants,
        "questions": {
            str(q): {
                "component": cmap.assignment[q].value,
                **stats_dict(s),
            }
            for q, s in report.question_stats.items()
        },
        "components": {
            comp.value: stats_dict(report.component_stats[comp]) for comp in Component
        },
    }
