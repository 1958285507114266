"""Behavioral model of the switch-programmable LNA.

A device is described by a nominal performance table (12 switch
combinations x 4 parameters), a sensitivity tensor mapping a shared latent
process vector to additive performance deviations, and per-parameter
measurement-noise levels. The same latent vector drives all combinations,
which is what makes cross-combination prediction possible.

Model constants live in a JSON configuration file (see ``load_model`` for
the schema); ``default_model()`` returns the shipped configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from lnacal.errors import FileFormatError

# Parameter order used for every 4-vector / table axis in the package.
PARAMS = ("gain_db", "nf_db", "p1db_dbm", "idc_ma")
GAIN, NF, P1DB, IDC = range(4)

N_COMBOS = 12

# Discrete supply-scale levels a knob state may take.
SUPPLY_LEVELS = (0.95, 1.00, 1.05)

SWITCH_NAMES = ("sw1", "sw2", "sw3", "sw4", "sw5")

# Expected knob effect directions, as (parameter, sign) pairs: sign +1
# means turning the switch on increases the parameter value.
KNOB_RULES = {
    "sw1": (("gain_db", +1), ("nf_db", -1)),
    "sw2": (("gain_db", -1), ("p1db_dbm", -1), ("idc_ma", -1)),
    "sw3": (("p1db_dbm", +1), ("idc_ma", +1), ("nf_db", +1)),
    "sw4": (("gain_db", +1), ("idc_ma", +1)),
    "sw5": (("gain_db", +1), ("idc_ma", +1)),
}

# Published tuning-range targets checked by validate_table. Keys are the
# table parameters plus the dissipated-power span derived from the IDC
# span and the supply voltage.
SPAN_TARGETS = {
    "gain_db": 12.0,
    "nf_db": 1.5,
    "p1db_dbm": 10.0,
    "power_mw": 18.0,
}
SPAN_REL_TOL = 0.15


@dataclass(frozen=True)
class PerformanceVector:
    """One device's performance at one switch combination.

    ``s11_db``/``s22_db`` are optional pass-through return losses; they are
    carried for reporting but never modeled statistically.
    """

    gain_db: float
    nf_db: float
    p1db_dbm: float
    idc_ma: float
    s11_db: float | None = None
    s22_db: float | None = None

    def __post_init__(self):
        vals = (self.gain_db, self.nf_db, self.p1db_dbm, self.idc_ma)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"performance values must be finite, got {vals}")
        if self.nf_db <= 0:
            raise ValueError(f"nf_db must be positive, got {self.nf_db}")
        if self.idc_ma <= 0:
            raise ValueError(f"idc_ma must be positive, got {self.idc_ma}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.gain_db, self.nf_db, self.p1db_dbm, self.idc_ma], dtype=float
        )

    @classmethod
    def from_array(cls, values, s11_db=None, s22_db=None) -> "PerformanceVector":
        g, n, p, i = (float(v) for v in values)
        return cls(g, n, p, i, s11_db=s11_db, s22_db=s22_db)


@dataclass(frozen=True)
class KnobState:
    """Raw tuning-knob setting: five switches plus two supply scales."""

    sw1: bool = False
    sw2: bool = False
    sw3: bool = False
    sw4: bool = False
    sw5: bool = False
    vdd1_scale: float = 1.0
    vdd2_scale: float = 1.0

    def __post_init__(self):
        for name in ("vdd1_scale", "vdd2_scale"):
            v = getattr(self, name)
            if not any(abs(v - lv) < 1e-12 for lv in SUPPLY_LEVELS):
                raise ValueError(
                    f"{name}={v} not in allowed supply levels {SUPPLY_LEVELS}"
                )

    def switches(self) -> tuple[bool, ...]:
        return (self.sw1, self.sw2, self.sw3, self.sw4, self.sw5)

    def knob_fields(self) -> tuple:
        return self.switches() + (self.vdd1_scale, self.vdd2_scale)


@dataclass(frozen=True)
class SwitchCombo:
    """One of the 12 indexed configurations.

    ``anchored`` is True when the knob decoding for this index is a
    published setting; False marks a configured placeholder whose knob
    state is a fill-in.
    """

    index: int
    knobs: KnobState
    anchored: bool = False

    def __post_init__(self):
        if not 0 <= self.index < N_COMBOS:
            raise ValueError(f"combo index {self.index} outside [0, {N_COMBOS - 1}]")


@dataclass(frozen=True)
class ProcessSample:
    """Latent process-variation vector (unitless standard scores)."""

    z: np.ndarray
    board_id: int | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if not np.all(np.isfinite(z)):
            raise ValueError("process vector z must be finite")
        object.__setattr__(self, "z", z)


@dataclass
class DeviceModel:
    """Nominal table, sensitivity tensor and noise levels for one design.

    nominal      : (12, 4) array, rows follow combo index, columns PARAMS
    sensitivity  : (12, 4, latent_dim) array; deviation = sensitivity[c] @ z
    noise_sigma  : (4,) per-parameter measurement-noise standard deviations
    supply_v     : nominal supply voltage, used only to convert the IDC
                   span to dissipated power
    scale_rule   : optional (lo, hi) pair when the sensitivity tensor was
                   built as base * linear-in-index scale (kept so a loaded
                   config saves back losslessly)
    """

    combos: tuple[SwitchCombo, ...]
    nominal: np.ndarray
    sensitivity: np.ndarray
    noise_sigma: np.ndarray
    supply_v: float = 1.2
    base_sensitivity: np.ndarray | None = None
    scale_rule: tuple[float, float] | None = None

    def __post_init__(self):
        self.nominal = np.asarray(self.nominal, dtype=float)
        self.sensitivity = np.asarray(self.sensitivity, dtype=float)
        self.noise_sigma = np.asarray(self.noise_sigma, dtype=float)
        if len(self.combos) != N_COMBOS:
            raise ValueError(f"model must define exactly {N_COMBOS} combos")
        if self.nominal.shape != (N_COMBOS, 4):
            raise ValueError(f"nominal table shape {self.nominal.shape} != (12, 4)")
        if self.sensitivity.shape[:2] != (N_COMBOS, 4):
            raise ValueError("sensitivity must be (12, 4, latent_dim)")
        if np.any(self.noise_sigma <= 0):
            raise ValueError("noise_sigma entries must be strictly positive")
        indices = [c.index for c in self.combos]
        if indices != list(range(N_COMBOS)):
            raise ValueError("combos must be indexed 0..11 in order")

    @property
    def latent_dim(self) -> int:
        return self.sensitivity.shape[2]

    def nominal_vector(self, index: int) -> PerformanceVector:
        return PerformanceVector.from_array(self.nominal[index])


def _combo_scale(index: int, lo: float, hi: float) -> float:
    return lo + (hi - lo) * index / (N_COMBOS - 1)


def evaluate_true(model: DeviceModel, sample: ProcessSample,
                  combo: SwitchCombo | int) -> PerformanceVector:
    """Noise-free performance of a device at one combination.

    Affine in the latent vector: nominal[combo] + sensitivity[combo] @ z.
    """
    idx = combo.index if isinstance(combo, SwitchCombo) else int(combo)
    if not 0 <= idx < N_COMBOS:
        raise ValueError(f"combo index {idx} outside [0, {N_COMBOS - 1}]")
    z = np.asarray(sample.z, dtype=float)
    if z.shape != (model.latent_dim,):
        raise ValueError(
            f"process vector has dim {z.shape}, model expects ({model.latent_dim},)"
        )
    values = model.nominal[idx] + model.sensitivity[idx] @ z
    return PerformanceVector.from_array(values)


def measure(model: DeviceModel, sample: ProcessSample, combo: SwitchCombo | int,
            rng: np.random.Generator) -> PerformanceVector:
    """Simulated lab measurement: true performance plus Gaussian noise.

    Draws exactly four standard normals from ``rng`` (one per parameter),
    so output is reproducible for a given generator state.
    """
    true = evaluate_true(model, sample, combo).as_array()
    noisy = true + rng.standard_normal(4) * model.noise_sigma
    return PerformanceVector.from_array(noisy)


# ---------------------------------------------------------------------------
# Table validation


@dataclass
class SpanCheck:
    name: str
    span: float
    target: float
    rel_tol: float

    @property
    def passed(self) -> bool:
        return abs(self.span - self.target) <= self.rel_tol * self.target


@dataclass
class MonotonicityCheck:
    """One single-knob anchored pair, with the expected direction results."""

    knob: str
    off_index: int
    on_index: int
    # (parameter, sign, observed_delta, ok) per rule for this knob
    results: tuple = ()

    @property
    def passed(self) -> bool:
        return all(ok for (_, _, _, ok) in self.results)


@dataclass
class ValidationReport:
    spans: list[SpanCheck] = field(default_factory=list)
    monotonicity: list[MonotonicityCheck] = field(default_factory=list)
    excluded_combos: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.spans) and all(
            m.passed for m in self.monotonicity
        )

    def failures(self) -> list[str]:
        out = []
        for s in self.spans:
            if not s.passed:
                out.append(
                    f"span {s.name}: {s.span:.3f} outside "
                    f"{s.target}±{100 * s.rel_tol:.0f}%"
                )
        for m in self.monotonicity:
            for param, sign, delta, ok in m.results:
                if not ok:
                    arrow = "increase" if sign > 0 else "decrease"
                    out.append(
                        f"{m.knob} on (combo {m.off_index} -> {m.on_index}) "
                        f"should {arrow} {param}, saw delta {delta:+.3f}"
                    )
        return out


def validate_table(model: DeviceModel, span_targets=None,
                   rel_tol: float = SPAN_REL_TOL) -> ValidationReport:
    """Check the nominal table against published tuning ranges and knob
    effect directions.

    Span checks compare max-min of each parameter across the 12 combos
    (IDC converted to dissipated power via supply_v) to the expected
    tuning ranges within a relative tolerance. Monotonicity checks run
    over every pair of *anchored* combos whose knob states differ in
    exactly one switch; unanchored combos are excluded and listed.
    """
    targets = dict(SPAN_TARGETS if span_targets is None else span_targets)
    report = ValidationReport()

    spans = model.nominal.max(axis=0) - model.nominal.min(axis=0)
    for pi, pname in enumerate(PARAMS):
        if pname == "idc_ma":
            report.spans.append(
                SpanCheck("power_mw", spans[pi] * model.supply_v,
                          targets["power_mw"], rel_tol)
            )
        else:
            report.spans.append(
                SpanCheck(pname, spans[pi], targets[pname], rel_tol)
            )

    anchored = [c for c in model.combos if c.anchored]
    report.excluded_combos = [c.index for c in model.combos if not c.anchored]

    for i, a in enumerate(anchored):
        for b in anchored[i + 1:]:
            fa, fb = a.knobs.knob_fields(), b.knobs.knob_fields()
            diff = [k for k in range(7) if fa[k] != fb[k]]
            if len(diff) != 1 or diff[0] >= len(SWITCH_NAMES):
                continue  # multi-knob pair, or a supply-scale-only pair (no rule)
            sw = SWITCH_NAMES[diff[0]]
            off, on = (a, b) if fb[diff[0]] else (b, a)
            results = []
            for param, sign in KNOB_RULES[sw]:
                pi = PARAMS.index(param)
                delta = model.nominal[on.index, pi] - model.nominal[off.index, pi]
                results.append((param, sign, delta, sign * delta > 0))
            report.monotonicity.append(
                MonotonicityCheck(sw, off.index, on.index, tuple(results))
            )
    return report


# ---------------------------------------------------------------------------
# Configuration file I/O
#
# Schema (JSON, version 1):
# {
#   "format": "lnacal-model", "version": 1,
#   "supply_v": 1.2,
#   "noise_sigma": {"gain_db": ..., "nf_db": ..., "p1db_dbm": ..., "idc_ma": ...},
#   "sensitivity": {
#     "base": [[4 x latent_dim]],
#     "combo_scale": {"lo": 0.8, "hi": 1.2}        # scale = lo + (hi-lo)*i/11
#     # or, instead of base/combo_scale:
#     "matrices": [12 x [4 x latent_dim]]
#   },
#   "combos": [
#     {"index": 0, "sw": [false x5], "vdd1_scale": 1.0, "vdd2_scale": 1.0,
#      "anchored": true,
#      "nominal": {"gain_db": ..., "nf_db": ..., "p1db_dbm": ..., "idc_ma": ...}},
#     ... 12 entries ...
#   ]
# }


def load_model(path) -> DeviceModel:
    """Load a device model configuration from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return _model_from_dict(raw)


def _model_from_dict(raw: dict) -> DeviceModel:
    if raw.get("format") != "lnacal-model":
        raise FileFormatError("not a lnacal-model configuration file")
    if raw.get("version") != 1:
        raise FileFormatError(f"unsupported model version {raw.get('version')}")

    combos = []
    nominal = np.zeros((N_COMBOS, 4))
    entries = sorted(raw["combos"], key=lambda e: e["index"])
    if [e["index"] for e in entries] != list(range(N_COMBOS)):
        raise FileFormatError("combo indices must cover 0..11 exactly once")
    for e in entries:
        sw = e["sw"]
        knobs = KnobState(*map(bool, sw), vdd1_scale=float(e["vdd1_scale"]),
                          vdd2_scale=float(e["vdd2_scale"]))
        combos.append(SwitchCombo(e["index"], knobs, bool(e["anchored"])))
        nominal[e["index"]] = [e["nominal"][p] for p in PARAMS]

    sens_cfg = raw["sensitivity"]
    base = None
    rule = None
    if "matrices" in sens_cfg:
        sensitivity = np.asarray(sens_cfg["matrices"], dtype=float)
    else:
        base = np.asarray(sens_cfg["base"], dtype=float)
        scale = sens_cfg["combo_scale"]
        rule = (float(scale["lo"]), float(scale["hi"]))
        sensitivity = np.stack(
            [_combo_scale(i, *rule) * base for i in range(N_COMBOS)]
        )

    noise = np.array([raw["noise_sigma"][p] for p in PARAMS], dtype=float)
    return DeviceModel(
        combos=tuple(combos),
        nominal=nominal,
        sensitivity=sensitivity,
        noise_sigma=noise,
        supply_v=float(raw["supply_v"]),
        base_sensitivity=base,
        scale_rule=rule,
    )


def _model_to_dict(model: DeviceModel) -> dict:
    if model.scale_rule is not None and model.base_sensitivity is not None:
        sens_cfg = {
            "base": model.base_sensitivity.tolist(),
            "combo_scale": {"lo": model.scale_rule[0], "hi": model.scale_rule[1]},
        }
    else:
        sens_cfg = {"matrices": model.sensitivity.tolist()}
    return {
        "format": "lnacal-model",
        "version": 1,
        "supply_v": model.supply_v,
        "noise_sigma": {p: float(model.noise_sigma[i]) for i, p in enumerate(PARAMS)},
        "sensitivity": sens_cfg,
        "combos": [
            {
                "index": c.index,
                "sw": list(c.knobs.switches()),
                "vdd1_scale": c.knobs.vdd1_scale,
                "vdd2_scale": c.knobs.vdd2_scale,
                "anchored": c.anchored,
                "nominal": {
                    p: float(model.nominal[c.index, i])
                    for i, p in enumerate(PARAMS)
                },
            }
            for c in model.combos
        ],
    }


def save_model(model: DeviceModel, path) -> None:
    """Write a model configuration; load(save(m)) reproduces m exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


_DEFAULT_MODEL: DeviceModel | None = None


def default_model() -> DeviceModel:
    """The shipped device model configuration (a fresh copy per call)."""
    global _DEFAULT_MODEL
    if _DEFAULT_MODEL is None:
        ref = resources.files("lnacal").joinpath("data/default_model.json")
        _DEFAULT_MODEL = _model_from_dict(json.loads(ref.read_text()))
    m = _DEFAULT_MODEL
    return replace(
        m,
        combos=m.combos,
        nominal=m.nominal.copy(),
        sensitivity=m.sensitivity.copy(),
        noise_sigma=m.noise_sigma.copy(),
        base_sensitivity=None if m.base_sensitivity is None
        else m.base_sensitivity.copy(),
    )


def decode_combo(index: int) -> SwitchCombo:
    """Knob state for a combination index under the shipped configuration."""
    if not isinstance(index, (int, np.integer)) or not 0 <= index < N_COMBOS:
        raise ValueError(f"combo index must be an integer in [0, 11], got {index}")
    return default_model().combos[index]
