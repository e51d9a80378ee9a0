"""Seeded training trials, grid selection, and the summary metrics.

A trial is deterministic in its seed: the data substreams, the model
init, and every epoch's shuffle derive from it through fixed domain
keys, so methods compared under one seed see identical datasets and
identical initial weights.

Hyperparameter selection follows the validation protocol: train one
trial per grid value, rank by final-epoch validation accuracy, break
ties toward the smaller value.  Because selection never reads the test
split, the sweep can run its grid trials with a single-point test split
and re-train only the winner against the full test set; the selected
value and the reported metrics are identical to the all-full-size run.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .datasets import SyntheticSpec, generate
from .models import LabeledBatch, MlpModel, _losses_and_output_deltas, mlp_forward
from .numerics import KEY_EPOCH_SHUFFLE, KEY_MODEL_INIT, l2_norm, substream
from .objectives import ObjectiveSpec, direction_for
from .optimizers import AdamState, SgdState, adam_step, sgd_step

TRIAL_CSV_HEADER = "epoch,train_loss,val_loss,test_loss,train_acc,val_acc,test_acc,model_norm"

DEFAULT_GRID = tuple(np.linspace(0.01, 2.0, 40))


@dataclass(frozen=True)
class TrialConfig:
    """One training run.  The dataset spec's own seed is ignored: the
    trial seed drives data, init, and shuffling together."""

    dataset: SyntheticSpec
    objective: ObjectiveSpec
    hidden: tuple = (64, 64)
    loss: str = "cross-entropy"
    optimizer: str = "adam"
    learning_rate: float = 0.001
    momentum: float = 0.0
    epochs: int = 200
    batch_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 1 <= self.batch_size <= self.dataset.n_train:
            raise ValueError("batch size must be in [1, n_train]")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer: {self.optimizer!r}")


@dataclass
class TrialRecord:
    config: TrialConfig
    train_loss: np.ndarray
    val_loss: np.ndarray
    test_loss: np.ndarray
    train_acc: np.ndarray
    val_acc: np.ndarray
    test_acc: np.ndarray
    model_norm: np.ndarray
    diverged: bool = False

    def epochs_run(self) -> int:
        return self.train_loss.size


def evaluate(model: MlpModel, batch: LabeledBatch, loss: str):
    """(mean loss, accuracy); argmax ties break toward the lowest class."""
    logits = mlp_forward(model, batch.inputs)
    losses, _ = _losses_and_output_deltas(logits, batch.labels, loss)
    pred = np.argmax(logits, axis=1)
    return float(losses.mean()), float(np.mean(pred == batch.labels))


def _make_optimizer(config):
    if config.optimizer == "adam":
        return AdamState(alpha=config.learning_rate), adam_step
    if config.optimizer == "sgd":
        return SgdState(alpha=config.learning_rate, momentum=config.momentum), sgd_step
    raise ValueError(f"unknown optimizer: {config.optimizer!r}")


def train_epoch(model, w, train, objective, loss, state, step, batch_size, seed, epoch):
    """One shuffled pass over the training batch, updating the model in
    place.  Returns (w, diverged); a non-finite objective value or
    direction aborts the pass immediately."""
    order = substream(seed, KEY_EPOCH_SHUFFLE, epoch).permutation(len(train))
    for start in range(0, len(train), batch_size):
        idx = order[start : start + batch_size]
        batch = LabeledBatch(train.inputs[idx], train.labels[idx])
        # overflow here is an expected, flagged outcome, not a numerics bug
        with np.errstate(over="ignore", invalid="ignore"):
            res = direction_for(objective, model, batch, loss)
        if not (np.isfinite(res.objective_value) and np.all(np.isfinite(res.direction))):
            return w, True
        w = step(state, w, res.direction)
        model.set_flat(w)
    return w, False


def run_trial(config: TrialConfig) -> TrialRecord:
    """Train for the configured epochs, evaluating all three splits after
    each one.  A non-finite objective value or direction aborts the trial
    with the divergence flag set; the rows collected so far survive."""
    data_spec = dataclasses.replace(config.dataset, seed=config.seed)
    train, val, test = generate(data_spec)
    dims = (train.inputs.shape[1], *config.hidden, int(train.labels.max()) + 1)
    model = MlpModel.initialize(dims, substream(config.seed, KEY_MODEL_INIT))
    state, step = _make_optimizer(config)
    w = model.flatten()
    cols = {k: [] for k in ("train_loss", "val_loss", "test_loss", "train_acc", "val_acc", "test_acc", "model_norm")}
    diverged = False
    for epoch in range(1, config.epochs + 1):
        w, diverged = train_epoch(
            model, w, train, config.objective, config.loss, state, step,
            config.batch_size, config.seed, epoch,
        )
        if diverged:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            tr_loss, tr_acc = evaluate(model, train, config.loss)
            va_loss, va_acc = evaluate(model, val, config.loss)
            te_loss, te_acc = evaluate(model, test, config.loss)
        if not all(np.isfinite(v) for v in (tr_loss, va_loss, te_loss)):
            diverged = True
            break
        cols["train_loss"].append(tr_loss)
        cols["val_loss"].append(va_loss)
        cols["test_loss"].append(te_loss)
        cols["train_acc"].append(tr_acc)
        cols["val_acc"].append(va_acc)
        cols["test_acc"].append(te_acc)
        cols["model_norm"].append(l2_norm(w))
    return TrialRecord(config=config, diverged=diverged, **{k: np.array(v) for k, v in cols.items()})


def hyperparameter_of(spec: ObjectiveSpec):
    """The grid-tuned value for a spec: the threshold for the threshold
    family, the radius for the normalized-ascent method, the penalty
    weight for the gradient-regularized pair; None for plain ERM."""
    if spec.kind in ("flood", "iflood", "softad"):
        return spec.theta
    if spec.kind == "sam":
        return spec.radius
    if spec.kind in ("fdgr", "gr-exact"):
        return spec.lam
    return None


def with_hyperparameter(spec: ObjectiveSpec, value: float) -> ObjectiveSpec:
    if spec.kind in ("flood", "iflood", "softad"):
        return dataclasses.replace(spec, theta=float(value))
    if spec.kind == "sam":
        return dataclasses.replace(spec, radius=float(value))
    if spec.kind in ("fdgr", "gr-exact"):
        return dataclasses.replace(spec, lam=float(value))
    raise ValueError(f"{spec.kind} has no tunable hyperparameter")


def select_index(records) -> int:
    """Index of the winning record: highest final-epoch validation
    accuracy, ties toward the smaller hyperparameter value; diverged
    trials never win."""
    alive = [i for i, r in enumerate(records) if not r.diverged and r.epochs_run() > 0]
    if not alive:
        raise ValueError("all trials diverged")
    best = max(records[i].val_acc[-1] for i in alive)
    tied = [i for i in alive if records[i].val_acc[-1] == best]
    if len(tied) == 1:
        return tied[0]
    values = [hyperparameter_of(records[i].config.objective) for i in tied]
    if any(v is None for v in values):
        return tied[0]
    return tied[int(np.argmin(values))]


def grid_select(configs):
    """Run every config; return (best hyperparameter, best index, records)."""
    if not configs:
        raise ValueError("empty grid")
    records = [run_trial(c) for c in configs]
    i = select_index(records)
    return hyperparameter_of(records[i].config.objective), i, records


def loss_gen_gap(records) -> float:
    """Mean final-epoch test loss minus mean final-epoch train loss over
    the given trials."""
    records = list(records)
    if any(r.diverged or r.epochs_run() == 0 for r in records):
        raise ValueError("gap undefined for diverged trials")
    test = np.mean([r.test_loss[-1] for r in records])
    train = np.mean([r.train_loss[-1] for r in records])
    return float(test - train)


def write_trial_csv(path, record: TrialRecord) -> None:
    lines = [TRIAL_CSV_HEADER]
    for i in range(record.epochs_run()):
        lines.append(
            ",".join(
                [str(i + 1)]
                + [
                    repr(float(getattr(record, k)[i]))
                    for k in ("train_loss", "val_loss", "test_loss", "train_acc", "val_acc", "test_acc", "model_norm")
                ]
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trial_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines[0] != TRIAL_CSV_HEADER:
        raise ValueError("unexpected trial header")
    rows = [line.split(",") for line in lines[1:]]
    out = {"epoch": np.array([int(r[0]) for r in rows])}
    for j, k in enumerate(TRIAL_CSV_HEADER.split(",")[1:], start=1):
        out[k] = np.array([float(r[j]) for r in rows])
    return out


@dataclass
class MethodSummary:
    name: str
    selected: list
    records: list
    gap: float
    mean_test_acc: float
    std_test_acc: float
    mean_test_loss: float
    std_test_loss: float
    mean_train_loss: float


@dataclass
class ProtocolResult:
    methods: dict = field(default_factory=dict)


def run_protocol(dataset: SyntheticSpec, methods: dict, seeds, epochs: int = 200,
                 grid=DEFAULT_GRID, fast_grid: bool = True, **config_kwargs) -> ProtocolResult:
    """Grid-tuned multi-seed comparison: for each seed and method, tune
    the method's hyperparameter on the grid by validation accuracy, then
    collect the selected trial's final metrics.  ``methods`` maps name ->
    ObjectiveSpec template (grid values overwrite the tunable field).

    With ``fast_grid`` the grid trials run against a single-point test
    split (selection only reads validation accuracy) and the winner is
    re-trained with the full test split; results are identical to the
    slow path because the test substream is independent of train/val.
    """
    result = ProtocolResult()
    for name, template in methods.items():
        per_seed_selected = []
        per_seed_records = []
        for seed in seeds:
            if hyperparameter_of(template) is None:
                candidates = [template]
            else:
                candidates = [with_hyperparameter(template, v) for v in grid]
            small = dataclasses.replace(dataset, n_test=1) if fast_grid else dataset
            configs = [
                TrialConfig(dataset=small, objective=obj, epochs=epochs, seed=seed, **config_kwargs)
                for obj in candidates
            ]
            value, best, records = grid_select(configs)
            if fast_grid:
                spec = template if value is None else with_hyperparameter(template, value)
                chosen = run_trial(
                    TrialConfig(dataset=dataset, objective=spec, epochs=epochs, seed=seed, **config_kwargs)
                )
            else:
                chosen = records[best]
            if chosen.diverged:
                raise ValueError(f"selected trial diverged for {name} at seed {seed}")
            per_seed_selected.append(value)
            per_seed_records.append(chosen)
        accs = np.array([r.test_acc[-1] for r in per_seed_records])
        losses = np.array([r.test_loss[-1] for r in per_seed_records])
        trains = np.array([r.train_loss[-1] for r in per_seed_records])
        result.methods[name] = MethodSummary(
            name=name,
            selected=per_seed_selected,
            records=per_seed_records,
            gap=loss_gen_gap(per_seed_records),
            mean_test_acc=float(accs.mean()),
            std_test_acc=float(accs.std(ddof=1)) if accs.size > 1 else 0.0,
            mean_test_loss=float(losses.mean()),
            std_test_loss=float(losses.std(ddof=1)) if losses.size > 1 else 0.0,
            mean_train_loss=float(trains.mean()),
        )
    return result


def write_summary(path, result: ProtocolResult, seeds) -> None:
    """Key-value text blocks, one per method, blank-line separated."""
    blocks = []
    for name, m in result.methods.items():
        lines = [f"method = {name}", f"seeds = {','.join(str(s) for s in seeds)}"]
        sel = ",".join("none" if v is None else repr(float(v)) for v in m.selected)
        lines.append(f"selected = {sel}")
        lines.append(f"loss_gen_gap = {m.gap!r}")
        lines.append(f"mean_test_acc = {m.mean_test_acc!r}")
        lines.append(f"std_test_acc = {m.std_test_acc!r}")
        lines.append(f"mean_test_loss = {m.mean_test_loss!r}")
        lines.append(f"std_test_loss = {m.std_test_loss!r}")
        lines.append(f"mean_train_loss = {m.mean_train_loss!r}")
        blocks.append("\n".join(lines))
    with open(path, "w") as fh:
        fh.write("\n\n".join(blocks) + "\n")


HEATMAP_CSV_HEADER = "theta,sigma,final_test_loss"


def sweep_heatmap(dataset: SyntheticSpec, theta_values, sigma_values, epochs: int = 50,
                  seed: int = 0, **config_kwargs):
    """Final test loss of the soft rule on a (theta, sigma) grid with the
    linear model (no hidden layers).  Returns (grid array, any_diverged)."""
    out = np.full((len(theta_values), len(sigma_values)), np.nan)
    any_diverged = False
    for i, theta in enumerate(theta_values):
        for j, sigma in enumerate(sigma_values):
            config = TrialConfig(
                dataset=dataset,
                objective=ObjectiveSpec.softad(theta, sigma),
                hidden=(),
                epochs=epochs,
                seed=seed,
                **config_kwargs,
            )
            record = run_trial(config)
            if record.diverged:
                any_diverged = True
            else:
                out[i, j] = record.test_loss[-1]
    return out, any_diverged


def write_heatmap_csv(path, theta_values, sigma_values, grid) -> None:
    lines = [HEATMAP_CSV_HEADER]
    for i, theta in enumerate(theta_values):
        for j, sigma in enumerate(sigma_values):
            lines.append(f"{float(theta)!r},{float(sigma)!r},{float(grid[i, j])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
