"""Device populations: Monte-Carlo generation, board bootstrap, splits,
summaries and CSV persistence.

A dataset holds the measured performance of N devices at all 12 switch
combinations as an (N, 12, 4) array; the parameter axis follows
``dut.PARAMS``. Generation draws one random-number substream per sample
(keyed by sample id via ``numpy.random.SeedSequence.spawn``), so results
do not depend on evaluation order or worker count.

CSV schema (one row per sample x combination, sorted by id then combo)::

    # provenance=simulated
    # seed=42
    sample_id,combo_id,gain_db,nf_db,p1db_dbm,idc_ma
    0,0,12.43...,3.71...,-17.0...,14.02...

Board files are identical except the first column is named ``board_id``;
values are written at full precision (shortest round-trip decimal).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lnacal.dut import N_COMBOS, PARAMS, DeviceModel
from lnacal.errors import FileFormatError, InsufficientDataError

PROVENANCES = ("simulated", "board_bootstrap", "measured")


@dataclass
class Dataset:
    """Performance of a device population at every switch combination."""

    values: np.ndarray  # (n, 12, 4)
    provenance: str
    seed: int | None = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[1:] != (N_COMBOS, 4):
            raise ValueError(
                f"dataset values must be (n, {N_COMBOS}, 4), got {self.values.shape}"
            )
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.ids is None:
            self.ids = np.arange(self.n_samples)
        self.ids = np.asarray(self.ids, dtype=int)
        if not np.array_equal(self.ids, np.arange(self.n_samples)):
            raise ValueError("sample ids must be unique and contiguous from 0")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def features(self, combo_set) -> np.ndarray:
        """Flattened (n, 4*len(combo_set)) view of selected combinations."""
        idx = list(combo_set)
        return self.values[:, idx, :].reshape(self.n_samples, 4 * len(idx))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.provenance == other.provenance
            and self.seed == other.seed
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )


def generate_mc(model: DeviceModel, n: int, seed: int) -> Dataset:
    """Simulate n devices: draw a latent process vector per device and
    measure it (with noise) at all 12 combinations.

    Each sample consumes its own substream: first latent_dim standard
    normals for z, then a (12, 4) noise block in combo-major order.
    """
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    children = np.random.SeedSequence(seed).spawn(n)
    values = np.empty((n, N_COMBOS, 4))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        z = rng.standard_normal(model.latent_dim)
        noise = rng.standard_normal((N_COMBOS, 4)) * model.noise_sigma
        values[i] = model.nominal + model.sensitivity @ z + noise
    return Dataset(values, "simulated", seed=seed)


def bootstrap_boards(boards: Dataset, m: int, seed: int) -> Dataset:
    """Expand a small measured-board set into a synthetic population.

    Fits, per combination x parameter, a Gaussian with the boards' sample
    mean and sample standard deviation. Each synthetic sample draws one
    standard normal per *parameter* that scales the deviation at every
    combination (rank-1 coupling), so the cross-combination correlation
    that the predictor relies on survives the bootstrap.
    """
    if boards.n_samples < 2:
        raise InsufficientDataError(
            f"need at least 2 boards, got {boards.n_samples}"
        )
    if m < 1:
        raise ValueError(f"sample count must be >= 1, got {m}")
    mean = boards.values.mean(axis=0)          # (12, 4)
    std = boards.values.std(axis=0, ddof=1)    # (12, 4)
    children = np.random.SeedSequence(seed).spawn(m)
    values = np.empty((m, N_COMBOS, 4))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        u = rng.standard_normal(4)
        values[i] = mean + u * std
    return Dataset(values, "board_bootstrap", seed=seed)


def split(data: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint shuffled partition; parts are renumbered but preserve the
    original sample order within each part."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = data.n_samples
    k = int(n * train_fraction)
    if k < 1 or n - k < 1:
        raise ValueError(
            f"split of {n} samples at {train_fraction} leaves an empty part"
        )
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:k])
    test_idx = np.sort(perm[k:])
    mk = lambda idx: Dataset(data.values[idx], data.provenance, seed=data.seed)
    return mk(train_idx), mk(test_idx)


@dataclass
class SummaryTable:
    """Sample statistics per combination x parameter.

    ``std`` and ``corr`` are None when the dataset has a single sample.
    ``corr[p]`` is the 12x12 cross-combination correlation matrix of
    parameter p; entries are NaN where a combination has zero variance.
    """

    n_samples: int
    mean: np.ndarray                 # (12, 4)
    min: np.ndarray                  # (12, 4)
    max: np.ndarray                  # (12, 4)
    std: np.ndarray | None = None    # (12, 4)
    corr: np.ndarray | None = None   # (4, 12, 12)


def summarize(data: Dataset) -> SummaryTable:
    """Exact sample statistics of a dataset (std/correlation need n >= 2)."""
    if data.n_samples < 1:
        raise ValueError("cannot summarize an empty dataset")
    v = data.values
    table = SummaryTable(
        n_samples=data.n_samples,
        mean=v.mean(axis=0),
        min=v.min(axis=0),
        max=v.max(axis=0),
    )
    if data.n_samples >= 2:
        table.std = v.std(axis=0, ddof=1)
        corr = np.empty((4, N_COMBOS, N_COMBOS))
        for p in range(4):
            x = v[:, :, p]
            dev = x - x.mean(axis=0)
            cov = dev.T @ dev / (data.n_samples - 1)
            s = np.sqrt(np.diag(cov))
            with np.errstate(divide="ignore", invalid="ignore"):
                corr[p] = cov / np.outer(s, s)
        table.corr = corr
    return table


# ---------------------------------------------------------------------------
# CSV persistence


def _id_column(provenance: str) -> str:
    return "board_id" if provenance == "measured" else "sample_id"


def write_csv(data: Dataset, path) -> None:
    """Write a dataset; full decimal precision, rows sorted by (id, combo)."""
    lines = [f"# provenance={data.provenance}"]
    if data.seed is not None:
        lines.append(f"# seed={data.seed}")
    lines.append(_id_column(data.provenance) + ",combo_id," + ",".join(PARAMS))
    for i in range(data.n_samples):
        for c in range(N_COMBOS):
            row = ",".join(repr(float(x)) for x in data.values[i, c])
            lines.append(f"{data.ids[i]},{c},{row}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> Dataset:
    """Read a dataset written by write_csv; exact round-trip.

    Raises FileFormatError (with the offending line number) on malformed
    rows, duplicate (id, combo) pairs, or samples missing combinations.
    """
    provenance = None
    seed = None
    header_seen = False
    cells: dict[int, dict[int, np.ndarray]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key == "provenance":
                    provenance = val
                elif key == "seed":
                    seed = int(val)
                continue
            if not header_seen:
                cols = line.split(",")
                if (
                    len(cols) != 6
                    or cols[0] not in ("sample_id", "board_id")
                    or cols[1] != "combo_id"
                    or tuple(cols[2:]) != PARAMS
                ):
                    raise FileFormatError(f"unexpected header {line!r}", line=lineno)
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise FileFormatError(
                    f"expected 6 fields, got {len(parts)}", line=lineno
                )
            try:
                sid = int(parts[0])
                combo = int(parts[1])
                vals = np.array([float(x) for x in parts[2:]])
            except ValueError as exc:
                raise FileFormatError(str(exc), line=lineno) from None
            if not 0 <= combo < N_COMBOS:
                raise FileFormatError(f"combo_id {combo} out of range", line=lineno)
            if combo in cells.setdefault(sid, {}):
                raise FileFormatError(
                    f"duplicate entry for sample {sid}, combo {combo}", line=lineno
                )
            cells[sid][combo] = vals
    if not header_seen:
        raise FileFormatError("missing header row")
    if provenance is None:
        raise FileFormatError("missing '# provenance=' comment")

    n = len(cells)
    if sorted(cells) != list(range(n)):
        raise FileFormatError(
            f"sample ids must be contiguous from 0, got {sorted(cells)}"
        )
    values = np.empty((n, N_COMBOS, 4))
    for sid, combos in cells.items():
        for c in range(N_COMBOS):
            if c not in combos:
                raise FileFormatError(f"sample {sid} is missing combo {c}")
            values[sid, c] = combos[c]
    return Dataset(values, provenance, seed=seed)


def write_summary_csv(table: SummaryTable, path) -> None:
    """Per combo x parameter statistics as flat CSV rows."""
    lines = ["combo_id,parameter,mean,std,min,max"]
    for c in range(N_COMBOS):
        for p, pname in enumerate(PARAMS):
            std = "" if table.std is None else repr(float(table.std[c, p]))
            lines.append(
                f"{c},{pname},{float(table.mean[c, p])!r},{std},"
                f"{float(table.min[c, p])!r},{float(table.max[c, p])!r}"
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_corr_csv(table: SummaryTable, path) -> None:
    """Cross-combination correlation matrices as flat CSV rows."""
    lines = ["parameter,combo_i,combo_j,corr"]
    if table.corr is not None:
        for p, pname in enumerate(PARAMS):
            for i in range(N_COMBOS):
                for j in range(N_COMBOS):
                    lines.append(f"{pname},{i},{j},{float(table.corr[p, i, j])!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
