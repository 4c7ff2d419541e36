"""File formats: metric JSON, distribution/scenario/demand CSVs and plan
export.  Every rejection message carries the offending line (and column
where it makes sense) so bad files are quick to fix."""

from __future__ import annotations

import csv
import json
import warnings
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import ValidationError
from .metric import (
    FractionalConfiguration,
    Metric,
    build_circle_metric,
    build_general_metric,
    build_line_metric,
)
from .planner import DistributionSequence, FractionalPlan, IntegralPlan
from .correlated import ScenarioSet
from .uber import DemandDistributionSequence, UberDemand

PROB_SUM_TOL = 1e-6


def read_metric(path: str) -> Metric:
    """Metric from JSON: {"kind": "line", "coords": [...]},
    {"kind": "circle", "coords": [...], "circumference": C} or
    {"kind": "general", "dist": [[...]]}."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValidationError(f"{path}: metric JSON needs a 'kind' field")
    kind = doc["kind"]
    if kind == "line":
        return build_line_metric(_require(doc, "coords", path))
    if kind == "circle":
        return build_circle_metric(
            _require(doc, "coords", path), _require(doc, "circumference", path)
        )
    if kind == "general":
        return build_general_metric(_require(doc, "dist", path))
    raise ValidationError(f"{path}: unknown metric kind {kind!r}")


def write_metric(path: str, m: Metric) -> None:
    if m.kind == "line":
        doc = {"kind": "line", "coords": list(m.coords)}
    elif m.kind == "circle":
        doc = {"kind": "circle", "coords": list(m.coords), "circumference": m.circumference}
    else:
        doc = {"kind": "general", "dist": m.dist.tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ValidationError(f"{path}: metric JSON is missing {key!r}")
    return doc[key]


def _read_csv_rows(path: str, columns: Tuple[str, ...], optional: Tuple[str, ...] = ()):
    """Rows as dicts; header must contain `columns` (plus any of `optional`).
    Yields (line_number, row)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for col in columns:
            if col not in header:
                raise ValidationError(f"{path} line 1: missing column {col!r}")
        extra = [h for h in header if h not in columns and h not in optional]
        if extra:
            raise ValidationError(f"{path} line 1: unexpected columns {extra}")
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise ValidationError(
                    f"{path} line {lineno}: {len(raw)} fields, expected {len(header)}"
                )
            yield lineno, dict(zip(header, (c.strip() for c in raw)))


def _parse_int(value: str, path: str, lineno: int, col: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"{path} line {lineno}: column {col!r} is not an integer: {value!r}")


def _parse_float(value: str, path: str, lineno: int, col: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValidationError(f"{path} line {lineno}: column {col!r} is not a number: {value!r}")


def read_distributions(path: str) -> DistributionSequence:
    """CSV with columns step,point,probability.  Steps are 1-based and must
    be contiguous; duplicate (step, point) rows are summed with a warning;
    per-step probabilities must sum to 1 within 1e-6 (then renormalized)."""
    steps: Dict[int, Dict[int, float]] = {}
    seen: Dict[Tuple[int, int], int] = {}
    for lineno, row in _read_csv_rows(path, ("step", "point", "probability")):
        step = _parse_int(row["step"], path, lineno, "step")
        point = _parse_int(row["point"], path, lineno, "point")
        prob = _parse_float(row["probability"], path, lineno, "probability")
        if step < 1:
            raise ValidationError(f"{path} line {lineno}: steps are 1-based, got {step}")
        if prob < 0:
            raise ValidationError(f"{path} line {lineno}: negative probability {prob}")
        if (step, point) in seen:
            warnings.warn(
                f"{path} line {lineno}: duplicate (step={step}, point={point}) "
                f"also on line {seen[(step, point)]}; probabilities summed"
            )
        else:
            seen[(step, point)] = lineno
        steps.setdefault(step, {})
        steps[step][point] = steps[step].get(point, 0.0) + prob
    if not steps:
        raise ValidationError(f"{path}: no data rows")
    t = max(steps)
    missing = [s for s in range(1, t + 1) if s not in steps]
    if missing:
        raise ValidationError(f"{path}: missing steps {missing}")
    out = []
    for s in range(1, t + 1):
        total = sum(steps[s].values())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(
                f"{path}: step {s} probabilities sum to {total:.9g}, expected 1"
            )
        out.append({p: v / total for p, v in steps[s].items()})
    return DistributionSequence(out)


def write_distributions(path: str, d: DistributionSequence) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "point", "probability"])
        for tau in range(1, d.t + 1):
            for r in d.support(tau):
                writer.writerow([tau, r, repr(d.prob(tau, r))])


def read_scenarios(path: str) -> ScenarioSet:
    """CSV with columns scenario_id,prob,step,point.  Each scenario must
    list contiguous steps 1..t and a single consistent probability."""
    seqs: Dict[str, Dict[int, int]] = {}
    probs: Dict[str, float] = {}
    for lineno, row in _read_csv_rows(path, ("scenario_id", "prob", "step", "point")):
        sid = row["scenario_id"]
        prob = _parse_float(row["prob"], path, lineno, "prob")
        step = _parse_int(row["step"], path, lineno, "step")
        point = _parse_int(row["point"], path, lineno, "point")
        if sid in probs and abs(probs[sid] - prob) > 1e-12:
            raise ValidationError(
                f"{path} line {lineno}: scenario {sid!r} listed with two "
                f"probabilities ({probs[sid]} and {prob})"
            )
        probs[sid] = prob
        seqs.setdefault(sid, {})
        if step in seqs[sid]:
            raise ValidationError(
                f"{path} line {lineno}: duplicate step {step} in scenario {sid!r}"
            )
        seqs[sid][step] = point
    if not seqs:
        raise ValidationError(f"{path}: no data rows")
    lengths = {len(s) for s in seqs.values()}
    if len(lengths) != 1:
        raise ValidationError(f"{path}: scenario lengths differ: {sorted(lengths)}")
    t = lengths.pop()
    scenarios, ps = [], []
    for sid in sorted(seqs):
        missing = [s for s in range(1, t + 1) if s not in seqs[sid]]
        if missing:
            raise ValidationError(f"{path}: scenario {sid!r} missing steps {missing}")
        scenarios.append(tuple(seqs[sid][s] for s in range(1, t + 1)))
        ps.append(probs[sid])
    total = sum(ps)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValidationError(f"{path}: scenario probabilities sum to {total:.9g}")
    ps = [p / total for p in ps]
    return ScenarioSet(scenarios, ps)


def read_demands(path: str) -> Union[List[UberDemand], DemandDistributionSequence]:
    """CSV with columns step,source,destination[,probability].

    Without the probability column the file is a deterministic demand
    schedule (one demand per step); with it, per-step distributions over
    (source, destination) pairs.
    """
    rows = list(_read_csv_rows(path, ("step", "source", "destination"), optional=("probability",)))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    has_prob = "probability" in rows[0][1]
    parsed: Dict[int, Dict[Tuple[int, int], float]] = {}
    for lineno, row in rows:
        step = _parse_int(row["step"], path, lineno, "step")
        src = _parse_int(row["source"], path, lineno, "source")
        dst = _parse_int(row["destination"], path, lineno, "destination")
        prob = _parse_float(row["probability"], path, lineno, "probability") if has_prob else 1.0
        if step < 1:
            raise ValidationError(f"{path} line {lineno}: steps are 1-based, got {step}")
        parsed.setdefault(step, {})
        if not has_prob and parsed[step]:
            raise ValidationError(
                f"{path} line {lineno}: step {step} has several demands but no "
                f"probability column"
            )
        key = (src, dst)
        parsed[step][key] = parsed[step].get(key, 0.0) + prob
    t = max(parsed)
    missing = [s for s in range(1, t + 1) if s not in parsed]
    if missing:
        raise ValidationError(f"{path}: missing steps {missing}")
    if not has_prob:
        return [UberDemand(*next(iter(parsed[s]))) for s in range(1, t + 1)]
    out = []
    for s in range(1, t + 1):
        total = sum(parsed[s].values())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(
                f"{path}: step {s} demand probabilities sum to {total:.9g}"
            )
        out.append({k: v / total for k, v in parsed[s].items()})
    return DemandDistributionSequence(out)


def write_plan(path: str, plan: Union[FractionalPlan, IntegralPlan], n: Optional[int] = None) -> None:
    """Plan as CSV rows step,point,mass (step 0 is the initial placement)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "point", "mass"])
        for tau, cfg in enumerate(plan.configs):
            if isinstance(cfg, FractionalConfiguration):
                vec = cfg.vector(n)
            else:
                vec = cfg.to_fractional(n if n is not None else max(cfg.positions) + 1).vector()
            for p, mass in enumerate(vec):
                if mass > 1e-12:
                    writer.writerow([tau, p, repr(float(mass))])


def read_plan(path: str, n: int, t: int) -> FractionalPlan:
    """Inverse of write_plan (flows and serve assignments are not stored)."""
    masses = np.zeros((t + 1, n))
    for lineno, row in _read_csv_rows(path, ("step", "point", "mass")):
        tau = _parse_int(row["step"], path, lineno, "step")
        p = _parse_int(row["point"], path, lineno, "point")
        if not 0 <= tau <= t:
            raise ValidationError(f"{path} line {lineno}: step {tau} outside 0..{t}")
        if not 0 <= p < n:
            raise ValidationError(f"{path} line {lineno}: point {p} outside 0..{n - 1}")
        masses[tau, p] += _parse_float(row["mass"], path, lineno, "mass")
    configs = tuple(FractionalConfiguration(masses[tau]) for tau in range(t + 1))
    return FractionalPlan(configs=configs, flows=(), serves=())
