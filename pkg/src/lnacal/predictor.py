"""Cross-combination performance prediction.

Learns, from a training population, the mapping from the performance
vector at a *known* set of switch combinations to the performance at the
remaining *target* combinations. Two trainers share one model container:

* ``train_nn``    -- small fully-connected network, hand-rolled
                     backpropagation, full-batch gradient descent with
                     early stopping (the production predictor)
* ``train_linear``-- closed-form ordinary least squares on the same
                     standardized features (baseline and test oracle)

Features are standardized per column; predictions are reported back in
physical units. Training is deterministic for a given (dataset, spec).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from lnacal import _kernels
from lnacal.dataset import Dataset
from lnacal.dut import N_COMBOS, PARAMS, PerformanceVector
from lnacal.errors import ContractError, FileFormatError, InsufficientDataError, TrainingError

VALIDATION_FRACTION = 0.2  # final fifth of the training set


@dataclass(frozen=True)
class PredictorSpec:
    """Which combinations feed the predictor, which it predicts, and how
    it trains."""

    known_set: tuple[int, ...]
    target_set: tuple[int, ...]
    hidden: tuple[int, ...] = (32,)
    activation: str = "tanh"
    learning_rate: float = 0.01
    batch_size: int | None = None  # None = full batch
    max_epochs: int = 5000
    patience: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "known_set", tuple(int(i) for i in self.known_set))
        object.__setattr__(self, "target_set", tuple(int(i) for i in self.target_set))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.known_set:
            raise ValueError("known_set must not be empty")
        if not self.target_set:
            raise ValueError("target_set must not be empty")
        for i in self.known_set + self.target_set:
            if not 0 <= i < N_COMBOS:
                raise ValueError(f"combo index {i} outside [0, {N_COMBOS - 1}]")
        if set(self.known_set) & set(self.target_set):
            raise ValueError("known_set and target_set must be disjoint")
        if len(set(self.known_set)) != len(self.known_set):
            raise ValueError("known_set has duplicates")
        if len(set(self.target_set)) != len(self.target_set):
            raise ValueError("target_set has duplicates")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be positive")
        if self.activation not in _kernels.ACTIVATIONS:
            raise ValueError(
                f"activation {self.activation!r} not in {sorted(_kernels.ACTIVATIONS)}"
            )
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")

    @property
    def input_width(self) -> int:
        return 4 * len(self.known_set)

    @property
    def output_width(self) -> int:
        return 4 * len(self.target_set)

    @classmethod
    def for_known(cls, known_set, **kwargs) -> "PredictorSpec":
        """Spec predicting every combination not in known_set."""
        known = tuple(int(i) for i in known_set)
        target = tuple(i for i in range(N_COMBOS) if i not in known)
        return cls(known_set=known, target_set=target, **kwargs)


@dataclass
class PredictorModel:
    """Trained predictor: spec, feature normalization and layer weights.

    ``weights[i]`` has shape (fan_in, fan_out); a model with a single
    layer is an affine map. ``x_clamped``/``y_clamped`` flag features
    whose standard deviation was zero and clamped to 1.
    """

    spec: PredictorSpec
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x_clamped: np.ndarray = field(default=None)
    y_clamped: np.ndarray = field(default=None)
    training_log: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x_clamped is None:
            self.x_clamped = np.zeros(len(self.x_mean), dtype=bool)
        if self.y_clamped is None:
            self.y_clamped = np.zeros(len(self.y_mean), dtype=bool)
        dims = [len(self.x_mean)]
        for w in self.weights:
            if w.shape[0] != dims[-1]:
                raise ValueError("weight matrix dimensions are inconsistent")
            dims.append(w.shape[1])
        if dims[-1] != len(self.y_mean):
            raise ValueError("output width does not match normalization")
        if dims[0] != self.spec.input_width or dims[-1] != self.spec.output_width:
            raise ValueError("layer dimensions do not match the spec")

    @property
    def act_id(self) -> int:
        return _kernels.ACTIVATIONS[self.spec.activation]

    def forward_std(self, x_std: np.ndarray) -> np.ndarray:
        return _kernels.forward(x_std, self.weights, self.biases, self.act_id)

    def predict_array(self, x_phys: np.ndarray) -> np.ndarray:
        """(n, 4*|known|) physical inputs -> (n, 4*|target|) physical outputs."""
        x_std = (np.atleast_2d(x_phys) - self.x_mean) / self.x_std
        return self.forward_std(x_std) * self.y_std + self.y_mean


# ---------------------------------------------------------------------------
# Training


def _standardize(values: np.ndarray):
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    clamped = std == 0.0
    std = np.where(clamped, 1.0, std)
    return (values - mean) / std, mean, std, clamped


def _prepare(train: Dataset, spec: PredictorSpec):
    if train.n_samples < 20:
        raise InsufficientDataError(
            f"training needs >= 20 samples, got {train.n_samples}"
        )
    X = train.features(spec.known_set)
    Y = train.features(spec.target_set)
    X_std, x_mean, x_std, x_clamped = _standardize(X)
    Y_std, y_mean, y_std, y_clamped = _standardize(Y)
    if x_clamped.all():
        raise TrainingError("every input feature has zero variance")
    n_val = max(1, train.n_samples // 5)
    n_fit = train.n_samples - n_val
    return (X_std[:n_fit], Y_std[:n_fit], X_std[n_fit:], Y_std[n_fit:],
            x_mean, x_std, x_clamped, y_mean, y_std, y_clamped)


def train_nn(train: Dataset, spec: PredictorSpec) -> PredictorModel:
    """Fit the network by full-batch gradient descent with early stopping.

    The last fifth of the training set is held out as the validation
    slice; the returned weights are those with the lowest validation
    loss. Deterministic for a fixed (train, spec).
    """
    if not spec.hidden:
        raise ValueError("train_nn requires at least one hidden layer")
    (Xf, Yf, Xv, Yv, x_mean, x_std, x_clamped,
     y_mean, y_std, y_clamped) = _prepare(train, spec)

    rng = np.random.default_rng(spec.seed)
    dims = [spec.input_width, *spec.hidden, spec.output_width]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))

    act_id = _kernels.ACTIVATIONS[spec.activation]
    weights, biases, best_val, best_epoch, epochs_run, backend = \
        _kernels.train_dense(Xf, Yf, Xv, Yv, weights, biases, act_id,
                             spec.learning_rate, spec.max_epochs,
                             spec.patience, spec.batch_size)
    train_loss = _kernels.loss_value(Xf, Yf, weights, biases, act_id)
    return PredictorModel(
        spec=spec,
        x_mean=x_mean, x_std=x_std, x_clamped=x_clamped,
        y_mean=y_mean, y_std=y_std, y_clamped=y_clamped,
        weights=weights, biases=biases,
        training_log={
            "method": "nn",
            "backend": backend,
            "train_loss": train_loss,
            "val_loss": best_val,
            "best_epoch": best_epoch,
            "epochs_run": epochs_run,
        },
    )


def train_linear(train: Dataset, spec: PredictorSpec) -> PredictorModel:
    """Closed-form least-squares affine baseline on the same features.

    Uses the same fit/validation slicing as train_nn so the two are
    directly comparable. Rank-deficient systems fall back to the
    minimum-norm solution and are flagged in the training log.
    """
    (Xf, Yf, Xv, Yv, x_mean, x_std, x_clamped,
     y_mean, y_std, y_clamped) = _prepare(train, spec)
    A = np.hstack([Xf, np.ones((Xf.shape[0], 1))])
    coef, _, rank, _ = np.linalg.lstsq(A, Yf, rcond=None)
    weights = [coef[:-1]]
    biases = [coef[-1]]
    act_id = _kernels.ACTIVATIONS[spec.activation]
    return PredictorModel(
        spec=spec,
        x_mean=x_mean, x_std=x_std, x_clamped=x_clamped,
        y_mean=y_mean, y_std=y_std, y_clamped=y_clamped,
        weights=weights, biases=biases,
        training_log={
            "method": "linear",
            "singular": bool(rank < A.shape[1]),
            "rank": int(rank),
            "train_loss": _kernels.loss_value(Xf, Yf, weights, biases, act_id),
            "val_loss": _kernels.loss_value(Xv, Yv, weights, biases, act_id),
        },
    )


def constant_model(known_set, target_set, predictions: dict) -> PredictorModel:
    """Zero-weight model that predicts fixed values for every input.

    ``predictions`` maps each target combo to a PerformanceVector (or
    4-array). Useful as a fixture (published walkthrough values) and as a
    perfect-knowledge predictor in oracle tests.
    """
    spec = PredictorSpec(known_set=tuple(known_set), target_set=tuple(target_set),
                         hidden=(), activation="identity")
    if set(predictions) != set(spec.target_set):
        raise ContractError("predictions must cover exactly the target_set")
    rows = []
    for c in spec.target_set:
        v = predictions[c]
        rows.append(v.as_array() if isinstance(v, PerformanceVector) else
                    np.asarray(v, dtype=float))
    y_mean = np.concatenate(rows)
    d_in, d_out = spec.input_width, spec.output_width
    return PredictorModel(
        spec=spec,
        x_mean=np.zeros(d_in), x_std=np.ones(d_in),
        y_mean=y_mean, y_std=np.ones(d_out),
        weights=[np.zeros((d_in, d_out))], biases=[np.zeros(d_out)],
        training_log={"method": "constant"},
    )


# ---------------------------------------------------------------------------
# Prediction and evaluation


def _as_array(perf) -> np.ndarray:
    if isinstance(perf, PerformanceVector):
        return perf.as_array()
    return np.asarray(perf, dtype=float)


def predict(model: PredictorModel, known_perf: dict) -> dict:
    """Predict target-combination performance from known measurements.

    ``known_perf`` must cover exactly the model's known_set; returns a
    dict mapping each target combo to a PerformanceVector in physical
    units.
    """
    if set(known_perf) != set(model.spec.known_set):
        raise ContractError(
            f"known_perf covers combos {sorted(known_perf)}, "
            f"model expects exactly {sorted(model.spec.known_set)}"
        )
    x = np.concatenate([_as_array(known_perf[c]) for c in model.spec.known_set])
    y = model.predict_array(x[None, :])[0]
    out = {}
    for t, c in enumerate(model.spec.target_set):
        out[c] = PerformanceVector.from_array(y[4 * t:4 * t + 4])
    return out


def predict_dataset(model: PredictorModel, data: Dataset) -> np.ndarray:
    """Predictions for every sample: (n, |target_set|, 4) physical units."""
    y = model.predict_array(data.features(model.spec.known_set))
    return y.reshape(data.n_samples, len(model.spec.target_set), 4)


@dataclass
class RmsReport:
    """Root-mean-square prediction error per target combo x parameter."""

    target_set: tuple[int, ...]
    rms: np.ndarray            # (|target_set|, 4), physical units
    n_samples: int
    metadata: dict = field(default_factory=dict)

    def value(self, combo: int, param: str) -> float:
        return float(self.rms[self.target_set.index(combo), PARAMS.index(param)])

    def worst(self) -> dict:
        """Per parameter: (target combo, rms) with the largest error."""
        out = {}
        for p, pname in enumerate(PARAMS):
            t = int(np.argmax(self.rms[:, p]))
            out[pname] = (self.target_set[t], float(self.rms[t, p]))
        return out

    def to_csv(self, path) -> None:
        lines = ["target_combo,parameter,rms"]
        for t, combo in enumerate(self.target_set):
            for p, pname in enumerate(PARAMS):
                lines.append(f"{combo},{pname},{float(self.rms[t, p])!r}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def rms_error(model: PredictorModel, eval_data: Dataset) -> RmsReport:
    """RMS prediction error over an evaluation set, in physical units.

    Keeping the evaluation set disjoint from the training data is the
    caller's responsibility; the report metadata records that this is
    not checked here.
    """
    if eval_data.n_samples < 1:
        raise ValueError("evaluation set is empty")
    pred = predict_dataset(model, eval_data)
    actual = eval_data.features(model.spec.target_set).reshape(pred.shape)
    err = pred - actual
    rms = np.sqrt(np.mean(err * err, axis=0))
    return RmsReport(
        target_set=model.spec.target_set,
        rms=rms,
        n_samples=eval_data.n_samples,
        metadata={"disjointness_checked": False},
    )


# ---------------------------------------------------------------------------
# Gradient verification


def grad_check(model: PredictorModel, x_std: np.ndarray, y_std: np.ndarray,
               step: float = 1e-5) -> float:
    """Compare backprop gradients against central finite differences.

    Perturbs every weight and bias entry by ±step (standardized units)
    and returns the maximum absolute difference relative to the largest
    gradient magnitude, max|g_a - g_fd| / max(||g_a||_inf, ||g_fd||_inf).
    """
    if len(model.weights) < 2:
        raise ValueError("grad_check requires at least one hidden layer")
    x_std = np.atleast_2d(np.asarray(x_std, dtype=float))
    y_std = np.atleast_2d(np.asarray(y_std, dtype=float))
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    _, gw, gb = _kernels.loss_and_grads(x_std, y_std, weights, biases, model.act_id)

    def fd(arrays, grads):
        worst_abs = 0.0
        scale = 0.0
        for arr, g in zip(arrays, grads):
            flat = arr.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = _kernels.loss_value(x_std, y_std, weights, biases, model.act_id)
                flat[i] = orig - step
                down = _kernels.loss_value(x_std, y_std, weights, biases, model.act_id)
                flat[i] = orig
                num = (up - down) / (2.0 * step)
                worst_abs = max(worst_abs, abs(gflat[i] - num))
                scale = max(scale, abs(gflat[i]), abs(num))
        return worst_abs, scale

    abs_w, scale_w = fd(weights, gw)
    abs_b, scale_b = fd(biases, gb)
    scale = max(scale_w, scale_b, 1e-12)
    return max(abs_w, abs_b) / scale


def standardized_batch(model: PredictorModel, data: Dataset, k: int | None = None):
    """First k samples of a dataset in the model's standardized feature
    space; convenience input for grad_check."""
    X = data.features(model.spec.known_set)
    Y = data.features(model.spec.target_set)
    if k is not None:
        X, Y = X[:k], Y[:k]
    return (X - model.x_mean) / model.x_std, (Y - model.y_mean) / model.y_std


# ---------------------------------------------------------------------------
# Model file I/O (versioned JSON; save(load(f)) is byte-identical)


def _spec_to_dict(spec: PredictorSpec) -> dict:
    return {
        "known_set": list(spec.known_set),
        "target_set": list(spec.target_set),
        "hidden": list(spec.hidden),
        "activation": spec.activation,
        "learning_rate": spec.learning_rate,
        "batch_size": spec.batch_size,
        "max_epochs": spec.max_epochs,
        "patience": spec.patience,
        "seed": spec.seed,
    }


def save_predictor(model: PredictorModel, path) -> None:
    doc = {
        "format": "lnacal-predictor",
        "version": 1,
        "spec": _spec_to_dict(model.spec),
        "normalization": {
            "x_mean": model.x_mean.tolist(),
            "x_std": model.x_std.tolist(),
            "x_clamped": model.x_clamped.tolist(),
            "y_mean": model.y_mean.tolist(),
            "y_std": model.y_std.tolist(),
            "y_clamped": model.y_clamped.tolist(),
        },
        "layers": [
            {"w": w.tolist(), "b": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
        "training_log": model.training_log,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_predictor(path) -> PredictorModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "lnacal-predictor":
        raise FileFormatError("not a lnacal-predictor model file")
    if doc.get("version") != 1:
        raise FileFormatError(f"unsupported predictor version {doc.get('version')}")
    s = doc["spec"]
    spec = PredictorSpec(
        known_set=tuple(s["known_set"]),
        target_set=tuple(s["target_set"]),
        hidden=tuple(s["hidden"]),
        activation=s["activation"],
        learning_rate=s["learning_rate"],
        batch_size=s["batch_size"],
        max_epochs=s["max_epochs"],
        patience=s["patience"],
        seed=s["seed"],
    )
    norm = doc["normalization"]
    return PredictorModel(
        spec=spec,
        x_mean=np.asarray(norm["x_mean"], dtype=float),
        x_std=np.asarray(norm["x_std"], dtype=float),
        x_clamped=np.asarray(norm["x_clamped"], dtype=bool),
        y_mean=np.asarray(norm["y_mean"], dtype=float),
        y_std=np.asarray(norm["y_std"], dtype=float),
        y_clamped=np.asarray(norm["y_clamped"], dtype=bool),
        weights=[np.asarray(layer["w"], dtype=float) for layer in doc["layers"]],
        biases=[np.asarray(layer["b"], dtype=float) for layer in doc["layers"]],
        training_log=doc["training_log"],
    )
