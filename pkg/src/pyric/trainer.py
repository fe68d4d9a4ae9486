"""Gradient-descent calibration of the parameter set against the EDI loss."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape, Var, backward
from .data.grid import Dataset
from .data.ops import quantile_threshold
from .loss import DEFAULT_EPSILON, EdiScore, UndefinedScoreError, edi, edi_loss, hard_counts
from .nfdrs import CellInputs, SeriesResult, forward, simulate
from .params import ParameterSet
from .seeding import substream

DEFAULT_CHUNK = 16384


class TrainingDiverged(RuntimeError):
    """Loss became NaN; ``checkpoint`` holds the last good state."""

    def __init__(self, message: str, checkpoint: "Checkpoint | None"):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 50
    batch: int | None = None  # cell-days per step; None pools the whole fit period
    clip_limit: float = 10.0
    quantile_q: float = 0.5
    beta: float = 10.0
    beta_final: float | None = None  # linear anneal from beta to beta_final over max_epochs
    patience: int = 10
    validation_days: int = 365
    seed: int = 0
    threads: int = 1
    chunk_size: int = DEFAULT_CHUNK
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        for name in ("learning_rate", "max_epochs", "clip_limit", "beta", "patience", "validation_days",
                     "threads", "chunk_size", "epsilon"):
            v = getattr(self, name)
            if name == "learning_rate" and v == 0:
                continue
            if not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.batch is not None and self.batch <= 0:
            raise ValueError("batch must be positive")
        if self.beta_final is not None and self.beta_final <= 0:
            raise ValueError("beta_final must be positive")
        if not 0.0 < self.quantile_q < 1.0:
            raise ValueError("quantile_q must lie in (0, 1)")

    def beta_at(self, epoch: int) -> float:
        if self.beta_final is None or self.max_epochs <= 1:
            return self.beta
        w = (epoch - 1) / (self.max_epochs - 1)
        return self.beta + (self.beta_final - self.beta) * min(max(w, 0.0), 1.0)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Checkpoint:
    epoch: int
    params: ParameterSet
    loss: float
    validation_edi: float
    threshold: float
    clip_events: int = 0
    nan_zeroed: int = 0

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "loss": self.loss, "validation_edi": self.validation_edi,
                "threshold": self.threshold, "clip_events": self.clip_events, "nan_zeroed": self.nan_zeroed,
                "params": self.params.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        return cls(int(d["epoch"]), ParameterSet.from_json(json.dumps(d["params"])), float(d["loss"]),
                   float(d["validation_edi"]), float(d["threshold"]), int(d["clip_events"]),
                   int(d["nan_zeroed"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_edi: float
    validation_edi: float
    threshold: float
    beta: float
    grad_norm: float
    clip_events: int
    nan_zeroed: int
    values: dict = field(default_factory=dict)


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    best: Checkpoint | None = None

    def to_csv(self, path: str | Path) -> None:
        names = sorted(self.records[0].values) if self.records else []
        head = ["epoch", "loss", "train_edi", "validation_edi", "threshold", "beta", "grad_norm",
                "clip_events", "nan_zeroed", *names]
        lines = [",".join(head)]
        for r in self.records:
            row = [r.epoch, r.loss, r.train_edi, r.validation_edi, r.threshold, r.beta, r.grad_norm,
                   r.clip_events, r.nan_zeroed, *(r.values[n] for n in names)]
            lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
        Path(path).write_text("\n".join(lines) + "\n")


def sgd_step(params: ParameterSet, gradients: dict, learning_rate: float) -> ParameterSet:
    """p <- p - lr * g for unfrozen parameters; log-alphas move in log space."""
    updates = {}
    for name, g in gradients.items():
        if name in params and not params.entry(name).frozen:
            updates[name] = params[name] - learning_rate * float(g)
    return params.with_values(updates) if updates else params


@dataclass
class _Series:
    """Chain inputs of one dataset flattened to (days, cells) plus fire."""

    inputs: CellInputs
    valid: np.ndarray
    fire: np.ndarray

    @classmethod
    def of(cls, data: Dataset) -> "_Series":
        inputs, valid = data.stack.cell_inputs()
        n = data.stack.n_days
        valid = valid & data.fire.valid.reshape(n, -1)
        return cls(inputs, valid, data.fire.fire.reshape(n, -1).astype(np.float64))


def _require_fire(fire: np.ndarray, where: str) -> None:
    n_fire = int(np.count_nonzero(fire))
    if n_fire == 0:
        raise UndefinedScoreError(f"no observed fires in the {where} portion: EDI is undefined")
    if n_fire == fire.size:
        raise UndefinedScoreError(f"no fire-free cell-days in the {where} portion: EDI is undefined")


def validate(data: Dataset, params: ParameterSet, threshold: float) -> EdiScore:
    """Hard-mode EDI of ``data`` at a fixed threshold (plain counting, no fuzzy hits)."""
    s = _Series.of(data)
    res = simulate(s.inputs, params, "hard", s.valid)
    return edi(hard_counts(res.state.ic[s.valid], s.fire[s.valid], threshold))


class Trainer:
    """Holds the per-run state of :func:`train`."""

    def __init__(self, data: Dataset, config: TrainConfig):
        self.config = config
        n = data.stack.n_days
        if config.validation_days >= n:
            raise ValueError(f"validation period ({config.validation_days} days) leaves no training days")
        self.series = _Series.of(data)
        self.n_fit = n - config.validation_days
        fit_mask = self.series.valid.copy()
        fit_mask[self.n_fit:] = False
        val_mask = self.series.valid.copy()
        val_mask[: self.n_fit] = False
        self.fit_mask, self.val_mask = fit_mask, val_mask
        _require_fire(self.series.fire[fit_mask], "training")
        _require_fire(self.series.fire[val_mask], "validation")
        self.fit_days, self.fit_cells = np.nonzero(fit_mask)
        self.batch_rng = substream(config.seed, "trainer.batch")

    # evaluation --------------------------------------------------------------
    def run(self, params, mode: str) -> SeriesResult:
        return simulate(self.series.inputs, params, mode, self.series.valid)

    def hard_scores(self, params) -> tuple[float, float]:
        """(training-period hard threshold, validation EDI at that threshold)."""
        ic = self.run(params, "hard").state.ic
        thr = quantile_threshold(ic[self.fit_mask], self.config.quantile_q)
        score = edi(hard_counts(ic[self.val_mask], self.series.fire[self.val_mask], thr), self.config.epsilon)
        return thr, score.value

    # gradient ----------------------------------------------------------------
    def _chunk_grad(self, params, res: SeriesResult, days, cells, seed):
        tape = Tape()
        idx = (days, cells)
        inputs = self.series.inputs.take(idx)
        state, _ = forward(inputs, res.carry_at(idx), params, "smooth", tape=tape, validate=False)
        if not isinstance(state.ic, Var):  # nothing learnable
            return {}, 0, 0
        g = backward(state.ic, clip_limit=self.config.clip_limit, seed=seed, clip_leaves=False)
        return g.by_name(), g.clip_events, g.nan_zeroed

    def gradient(self, params: ParameterSet, res: SeriesResult, order: np.ndarray, beta: float, pool):
        """Loss, parameter gradient and counters for the fit cell-days in ``order``."""
        cfg = self.config
        days, cells = self.fit_days[order], self.fit_cells[order]
        ic_all = res.state.ic[self.fit_mask]
        threshold = quantile_threshold(ic_all, cfg.quantile_q)
        obs = self.series.fire[days, cells]
        ic = np.asarray(res.state.ic[days, cells], dtype=np.float64)

        loss_tape = Tape()
        leaf = loss_tape.variable(ic, name="ic")
        loss = edi_loss(leaf, obs, threshold, beta, cfg.epsilon)
        lg = backward(loss, clip_limit=cfg.clip_limit, keep_all=False)
        d_ic = np.asarray(lg[leaf], dtype=np.float64)

        bounds = range(0, len(order), cfg.chunk_size)
        jobs = [(days[s:s + cfg.chunk_size], cells[s:s + cfg.chunk_size], d_ic[s:s + cfg.chunk_size])
                for s in bounds]
        if pool is None:
            parts = [self._chunk_grad(params, res, *j) for j in jobs]
        else:
            parts = list(pool.map(lambda j: self._chunk_grad(params, res, *j), jobs))
        total: dict[str, float] = {}
        clips, nans = lg.clip_events, lg.nan_zeroed
        for grads, c, z in parts:  # fixed order keeps the sum reproducible
            for name, v in grads.items():
                total[name] = total.get(name, 0.0) + float(np.sum(v))
            clips += c
            nans += z
        for name, v in total.items():
            if abs(v) > cfg.clip_limit:
                clips += 1
                total[name] = math.copysign(cfg.clip_limit, v)
        return float(loss.value), threshold, total, clips, nans


def train(data: Dataset, params: ParameterSet, config: TrainConfig | None = None,
          progress=None) -> tuple[ParameterSet, TrainHistory]:
    """Calibrate ``params`` on ``data``; the final ``validation_days`` are held out.

    Epoch 0 scores the starting parameters.  Each later epoch refreshes the
    threshold from smooth-mode IC on the training days, back-propagates the
    soft EDI loss, takes SGD steps, then scores hard-mode EDI on the held-out
    days.  Returns the parameters of the best validation epoch (earliest on
    ties) and the history.
    """
    cfg = config or TrainConfig()
    tr = Trainer(data, cfg)
    learnable = params.learnable()
    history = TrainHistory()

    thr, val = tr.hard_scores(params)
    res = tr.run(params, "smooth")
    fit_thr = quantile_threshold(res.state.ic[tr.fit_mask], cfg.quantile_q)
    base_loss = float(edi_loss(res.state.ic[tr.fit_mask], tr.series.fire[tr.fit_mask], fit_thr,
                               cfg.beta, cfg.epsilon))
    best = Checkpoint(0, params, base_loss, val, thr)
    history.best = best
    history.records.append(EpochRecord(0, base_loss, 1.0 - base_loss, val, thr, cfg.beta_at(0), 0.0, 0, 0,
                                       {n: params[n] for n in learnable}))
    if progress:
        progress(history.records[-1])

    n_fit = len(tr.fit_days)
    step = cfg.batch or n_fit
    since_best = 0
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            beta = cfg.beta_at(epoch)
            order = tr.batch_rng.permutation(n_fit) if cfg.batch else np.arange(n_fit)
            loss_sum, clips, nans, g_norm = 0.0, 0, 0, 0.0
            n_steps = 0
            for s in range(0, n_fit, step):
                res = tr.run(params, "smooth")
                loss, _, grads, c, z = tr.gradient(params, res, np.sort(order[s:s + step]), beta, pool)
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"loss is NaN at epoch {epoch}", history.best)
                params = sgd_step(params, grads, cfg.learning_rate)
                loss_sum += loss
                clips += c
                nans += z
                g_norm = max(g_norm, math.sqrt(sum(v * v for v in grads.values())))
                n_steps += 1
            thr, val = tr.hard_scores(params)
            loss = loss_sum / n_steps
            history.records.append(EpochRecord(epoch, loss, 1.0 - loss, val, thr, beta, g_norm, clips, nans,
                                               {n: params[n] for n in learnable}))
            if progress:
                progress(history.records[-1])
            if val > history.best.validation_edi:
                history.best = Checkpoint(epoch, params, loss, val, thr, clips, nans)
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    history.stopped_early = True
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    history.best_epoch = history.best.epoch
    return history.best.params, history


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
