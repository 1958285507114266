"""In-field combination selection against a target specification.

Given measured performance at a small known set of combinations and
predictions for the rest, pick the combination that satisfies the target
at minimum supply current. A per-parameter margin can tighten the
constraints for predicted candidates to absorb prediction error;
measured candidates are never margined.

Target grammar (CLI and files): comma-separated terms over the
parameters gain, nf and p1db::

    gain:15..17,p1db:>-20,nf:<3.7

``lo..hi`` is a closed interval, ``>lo`` a lower bound, ``<hi`` an upper
bound. The objective is fixed: minimize idc_ma, ties broken by the lower
combination index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lnacal.dut import N_COMBOS, PerformanceVector
from lnacal.errors import ContractError
from lnacal.predictor import PredictorModel, predict

TARGET_PARAMS = ("gain_db", "nf_db", "p1db_dbm")
_SHORT = {"gain": "gain_db", "nf": "nf_db", "p1db": "p1db_dbm"}


@dataclass(frozen=True)
class Constraint:
    """Bound on one parameter: interval, at_least, at_most or unconstrained."""

    kind: str = "unconstrained"
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.kind not in ("interval", "at_least", "at_most", "unconstrained"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "interval":
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")
        elif self.kind == "at_least" and self.lo is None:
            raise ValueError("at_least needs lo")
        elif self.kind == "at_most" and self.hi is None:
            raise ValueError("at_most needs hi")

    @property
    def constrained(self) -> bool:
        return self.kind != "unconstrained"

    def bounds(self, margin: float = 0.0) -> tuple[float, float]:
        """Effective (lo, hi) after tightening inward by margin."""
        lo = -np.inf if self.lo is None or self.kind == "at_most" else self.lo + margin
        hi = np.inf if self.hi is None or self.kind == "at_least" else self.hi - margin
        return lo, hi

    def describe(self) -> str:
        if self.kind == "interval":
            return f"{self.lo}..{self.hi}"
        if self.kind == "at_least":
            return f">{self.lo}"
        if self.kind == "at_most":
            return f"<{self.hi}"
        return "unconstrained"


def interval(lo, hi) -> Constraint:
    return Constraint("interval", float(lo), float(hi))


def at_least(lo) -> Constraint:
    return Constraint("at_least", lo=float(lo))


def at_most(hi) -> Constraint:
    return Constraint("at_most", hi=float(hi))


@dataclass(frozen=True)
class TargetSpec:
    """Per-parameter constraints; objective is fixed to minimum idc_ma."""

    gain_db: Constraint = Constraint()
    nf_db: Constraint = Constraint()
    p1db_dbm: Constraint = Constraint()

    def __post_init__(self):
        if not any(c.constrained for c in self.constraints().values()):
            raise ValueError("at least one parameter must be constrained")

    def constraints(self) -> dict[str, Constraint]:
        return {
            "gain_db": self.gain_db,
            "nf_db": self.nf_db,
            "p1db_dbm": self.p1db_dbm,
        }

    def describe(self) -> str:
        parts = []
        for short, name in _SHORT.items():
            c = self.constraints()[name]
            if c.constrained:
                parts.append(f"{short}:{c.describe()}")
        return ",".join(parts)


def parse_target(text: str) -> TargetSpec:
    """Parse the target grammar, e.g. ``gain:15..17,p1db:>-20,nf:<3.7``."""
    fields: dict[str, Constraint] = {}
    for term in text.split(","):
        term = term.strip()
        if not term:
            continue
        name, sep, rest = term.partition(":")
        if not sep or name.strip() not in _SHORT:
            raise ValueError(
                f"bad target term {term!r}; expected gain/nf/p1db followed by ':'"
            )
        pname = _SHORT[name.strip()]
        if pname in fields:
            raise ValueError(f"parameter {name.strip()!r} constrained twice")
        rest = rest.strip()
        try:
            if rest.startswith(">"):
                fields[pname] = at_least(float(rest[1:]))
            elif rest.startswith("<"):
                fields[pname] = at_most(float(rest[1:]))
            elif ".." in rest:
                lo, hi = rest.split("..", 1)
                fields[pname] = interval(float(lo), float(hi))
            else:
                raise ValueError("expected lo..hi, >lo or <hi")
        except ValueError as exc:
            raise ValueError(f"bad target term {term!r}: {exc}") from None
    return TargetSpec(**fields)


@dataclass(frozen=True)
class MarginPolicy:
    """Inward constraint tightening applied to predicted candidates only."""

    gain_db: float = 0.0
    nf_db: float = 0.0
    p1db_dbm: float = 0.0

    def __post_init__(self):
        for name in TARGET_PARAMS:
            if getattr(self, name) < 0:
                raise ValueError(f"margin {name} must be >= 0")

    def get(self, param: str) -> float:
        return getattr(self, param)


def parse_margin(text: str) -> MarginPolicy:
    """Parse ``gain:0.5,nf:0.12,p1db:0.8`` (missing parameters default 0)."""
    values = {}
    for term in text.split(","):
        term = term.strip()
        if not term:
            continue
        name, sep, rest = term.partition(":")
        if not sep or name.strip() not in _SHORT:
            raise ValueError(f"bad margin term {term!r}")
        values[_SHORT[name.strip()]] = float(rest)
    return MarginPolicy(**values)


@dataclass(frozen=True)
class Violation:
    """One constraint a candidate failed, with the effective bound."""

    param: str
    bound: str        # "lower" or "upper"
    limit: float      # margin-tightened bound that was violated
    value: float

    def __str__(self):
        rel = "below minimum" if self.bound == "lower" else "above maximum"
        return f"{self.param}={self.value:g} {rel} {self.limit:g}"


@dataclass(frozen=True)
class Verdict:
    ok: bool
    violations: tuple[Violation, ...] = ()


@dataclass(frozen=True)
class Candidate:
    """One combination under consideration: its performance and where the
    numbers came from."""

    combo: int
    perf: PerformanceVector
    source: str  # "measured" or "predicted"

    def __post_init__(self):
        if not 0 <= self.combo < N_COMBOS:
            raise ValueError(f"combo index {self.combo} outside [0, {N_COMBOS - 1}]")
        if self.source not in ("measured", "predicted"):
            raise ValueError(f"source must be measured or predicted, got {self.source}")


def feasible(perf: PerformanceVector, target: TargetSpec,
             margin: MarginPolicy | None = None,
             source: str = "measured") -> Verdict:
    """Check one performance vector against the target.

    Margins tighten the bounds only when source is "predicted". The
    verdict lists every violated constraint.
    """
    margin = margin or MarginPolicy()
    m_active = source == "predicted"
    violations = []
    for param, constraint in target.constraints().items():
        if not constraint.constrained:
            continue
        lo, hi = constraint.bounds(margin.get(param) if m_active else 0.0)
        value = getattr(perf, param)
        if value < lo:
            violations.append(Violation(param, "lower", lo, value))
        if value > hi:
            violations.append(Violation(param, "upper", hi, value))
    return Verdict(ok=not violations, violations=tuple(violations))


@dataclass
class CalibrationReport:
    """Outcome of a selection run.

    ``chosen`` is the combo index with minimal idc_ma among feasible
    candidates (ties to the lower index), or None when nothing is
    feasible. ``measurements`` counts physical measurements consumed.
    """

    chosen: int | None
    candidates: list[Candidate]
    verdicts: dict[int, Verdict]
    measurements: int
    protocol: str = "select"
    target: TargetSpec | None = None
    margin: MarginPolicy | None = None
    verified: PerformanceVector | None = None
    verified_ok: bool | None = None

    @property
    def chosen_candidate(self) -> Candidate | None:
        if self.chosen is None:
            return None
        return next(c for c in self.candidates if c.combo == self.chosen)

    def to_text(self) -> str:
        lines = [f"protocol: {self.protocol}"]
        if self.target is not None:
            lines.append(f"target: {self.target.describe()}")
        lines.append(f"measurements: {self.measurements}")
        for c in sorted(self.candidates, key=lambda c: c.combo):
            v = self.verdicts[c.combo]
            status = "feasible" if v.ok else "infeasible"
            p = c.perf
            lines.append(
                f"combo {c.combo:2d} [{c.source:9s}] "
                f"gain={p.gain_db:6.2f} nf={p.nf_db:5.2f} "
                f"p1db={p.p1db_dbm:7.2f} idc={p.idc_ma:5.2f}  {status}"
            )
            for viol in v.violations:
                lines.append(f"    violates: {viol}")
        if self.chosen is None:
            lines.append("chosen: none (no feasible candidate)")
        else:
            lines.append(f"chosen: combo {self.chosen}")
        if self.verified is not None:
            lines.append(
                f"verification measurement: {self.verified} "
                f"({'feasible' if self.verified_ok else 'infeasible'})"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        lines = ["combo,source,feasible,violations,gain_db,nf_db,p1db_dbm,idc_ma,chosen"]
        for c in sorted(self.candidates, key=lambda c: c.combo):
            v = self.verdicts[c.combo]
            viol = ";".join(str(x) for x in v.violations)
            p = c.perf
            lines.append(
                f"{c.combo},{c.source},{int(v.ok)},{viol},"
                f"{p.gain_db!r},{p.nf_db!r},{p.p1db_dbm!r},{p.idc_ma!r},"
                f"{int(c.combo == self.chosen)}"
            )
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def select(candidates, target: TargetSpec,
           margin: MarginPolicy | None = None) -> CalibrationReport:
    """Pick the feasible candidate with minimum supply current.

    Ties break to the lower combo index. Margins apply to predicted
    candidates only. The measurement count equals the number of
    measured-source candidates.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate set is empty")
    seen = set()
    for c in candidates:
        if c.combo in seen:
            raise ValueError(f"duplicate candidate for combo {c.combo}")
        seen.add(c.combo)

    margin = margin or MarginPolicy()
    verdicts = {c.combo: feasible(c.perf, target, margin, c.source)
                for c in candidates}
    feas = [c for c in candidates if verdicts[c.combo].ok]
    chosen = None
    if feas:
        chosen = min(feas, key=lambda c: (c.perf.idc_ma, c.combo)).combo
    return CalibrationReport(
        chosen=chosen,
        candidates=candidates,
        verdicts=verdicts,
        measurements=sum(1 for c in candidates if c.source == "measured"),
        target=target,
        margin=margin,
    )


def calibrate(device, model: PredictorModel, target: TargetSpec,
              known_set=None, margin: MarginPolicy | None = None,
              verify_chosen: bool = False) -> CalibrationReport:
    """Run the reconfiguration flow against a device.

    Measures exactly the model's known set via ``device.measure(combo)``,
    predicts the target set, and selects among the union. ``known_set``
    is an optional cross-check: it must match the model's known set.
    ``verify_chosen`` adds one confirming measurement of the chosen combo
    when it was predicted (off by default).
    """
    if known_set is not None and tuple(known_set) != tuple(model.spec.known_set):
        raise ContractError(
            f"protocol known_set {tuple(known_set)} does not match "
            f"model known_set {tuple(model.spec.known_set)}"
        )
    measured = {c: device.measure(c) for c in model.spec.known_set}
    predicted = predict(model, measured)
    candidates = [Candidate(c, p, "measured") for c, p in measured.items()]
    candidates += [Candidate(c, p, "predicted") for c, p in predicted.items()]

    report = select(candidates, target, margin)
    report.measurements = len(model.spec.known_set)
    report.protocol = f"known={{{','.join(str(c) for c in model.spec.known_set)}}}"

    chosen = report.chosen_candidate
    if verify_chosen and chosen is not None and chosen.source == "predicted":
        confirmed = device.measure(chosen.combo)
        report.verified = confirmed
        report.verified_ok = feasible(confirmed, target, None, "measured").ok
        report.measurements += 1
    return report


def calibrate_with_escalation(device, model_one: PredictorModel,
                              model_two: PredictorModel, target: TargetSpec,
                              margin: MarginPolicy | None = None,
                              idc_rms: float = 0.0) -> CalibrationReport:
    """Convenience flow: try the cheaper protocol first, escalate when the
    decision is too close to call.

    Runs model_one; if the two lowest-current feasible candidates differ
    in predicted idc_ma by less than idc_rms, reruns with model_two
    (typically one more known combination).
    """
    report = calibrate(device, model_one, target, margin=margin)
    feas = sorted(
        (c for c in report.candidates if report.verdicts[c.combo].ok),
        key=lambda c: (c.perf.idc_ma, c.combo),
    )
    if len(feas) >= 2 and feas[1].perf.idc_ma - feas[0].perf.idc_ma < idc_rms:
        second = calibrate(device, model_two, target, margin=margin)
        second.measurements += report.measurements
        second.protocol = f"{report.protocol} then {second.protocol}"
        return second
    return report


def brute_force_select(true_perf: dict, target: TargetSpec) -> int | None:
    """Exhaustive oracle: feasibility over true performance at all 12
    combos, minimum idc_ma, same tie-break as select()."""
    if sorted(true_perf) != list(range(N_COMBOS)):
        raise ValueError("true_perf must cover all 12 combos")
    best = None
    for combo in range(N_COMBOS):
        perf = true_perf[combo]
        if not feasible(perf, target, None, "measured").ok:
            continue
        if best is None or perf.idc_ma < best[0]:
            best = (perf.idc_ma, combo)
    return None if best is None else best[1]


# ---------------------------------------------------------------------------
# Device adapters


class TableDevice:
    """Device whose measurements are read from a recorded table."""

    def __init__(self, table: dict):
        self.table = dict(table)
        self.measure_count = 0

    def measure(self, combo: int) -> PerformanceVector:
        if combo not in self.table:
            raise ContractError(f"no recorded measurement for combo {combo}")
        self.measure_count += 1
        return self.table[combo]


class SimulatedDevice:
    """Device backed by the behavioral model: one latent process vector,
    noisy measurements from a dedicated substream."""

    def __init__(self, model, sample, seed: int = 0, noisy: bool = True):
        from lnacal import dut

        self._dut = dut
        self.model = model
        self.sample = sample
        self.noisy = noisy
        self.rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.measure_count = 0

    def measure(self, combo: int) -> PerformanceVector:
        self.measure_count += 1
        if self.noisy:
            return self._dut.measure(self.model, self.sample, combo, self.rng)
        return self._dut.evaluate_true(self.model, self.sample, combo)

    def true_perf(self, combo: int) -> PerformanceVector:
        return self._dut.evaluate_true(self.model, self.sample, combo)
