"""Reconfiguration toolkit for a switch-programmable low-noise amplifier.

The package models a 12-combination programmable LNA, generates
process-varied device populations, trains a predictor that infers
performance at unmeasured switch combinations from measurements at known
ones, and selects the combination that meets a target spec at minimum
supply current.
"""

from lnacal.dut import (
    DeviceModel,
    KnobState,
    PerformanceVector,
    ProcessSample,
    SwitchCombo,
    decode_combo,
    default_model,
    evaluate_true,
    load_model,
    measure,
    save_model,
    validate_table,
)
from lnacal.dataset import (
    Dataset,
    bootstrap_boards,
    generate_mc,
    read_csv,
    split,
    summarize,
    write_csv,
)
from lnacal.predictor import (
    PredictorModel,
    PredictorSpec,
    RmsReport,
    grad_check,
    load_predictor,
    rms_error,
    save_predictor,
    train_linear,
    train_nn,
)
from lnacal.calibrator import (
    CalibrationReport,
    Candidate,
    Constraint,
    MarginPolicy,
    TargetSpec,
    brute_force_select,
    calibrate,
    feasible,
    parse_target,
    select,
)

__version__ = "0.1.0"
