"""Stochastic training loop: Adam ascent on the evidence lower bound.

Minibatches are drawn as a seeded per-epoch permutation, so every data
point appears exactly once per epoch and a rerun with the same seed (and
a thread budget of one) reproduces the trace bit for bit.  The optimizer
is standard Adam applied to the negative bound — a single descent code
path.  No gradient clipping; the factorization jitter policy is the
safety net.

A numerical failure mid-run raises a training error that carries the
failing iteration and the last checkpoint known to be good, so long runs
are restartable.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .errors import ParameterError, ShapeError, TrainingError
from .seeding import seed_stream

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Knobs for one optimization run."""

    iterations: int
    batch_size: int
    learning_rate: float = 0.01
    seed: int = 0
    # optional step decay: multiply the rate by `factor` every `every` iterations
    lr_schedule: tuple | None = None
    eval_every: int = 50

    def __post_init__(self):
        if self.iterations < 0:
            raise ParameterError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be positive")
        if self.eval_every < 1:
            raise ParameterError("eval_every must be >= 1")
        if self.lr_schedule is not None:
            factor, every = self.lr_schedule
            if factor <= 0 or int(every) < 1:
                raise ParameterError("lr_schedule must be (positive factor, every >= 1)")
            self.lr_schedule = (float(factor), int(every))

    def rate_at(self, iteration: int) -> float:
        """Learning rate in effect at a 0-based iteration index."""
        if self.lr_schedule is None:
            return self.learning_rate
        factor, every = self.lr_schedule
        return self.learning_rate * factor ** (iteration // every)


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per named parameter."""

    m: dict
    v: dict
    step: int = 0

    @staticmethod
    def init(params: dict) -> "AdamState":
        zeros = lambda a: np.zeros_like(np.asarray(a, dtype=float))
        return AdamState(
            m={k: zeros(a) for k, a in params.items()},
            v={k: zeros(a) for k, a in params.items()},
        )


def adam_step(state: AdamState, params: dict, grads: dict, lr: float):
    """One bias-corrected Adam descent step; returns (state', params')."""
    if set(grads) != set(params):
        raise ShapeError("gradient keys do not match parameter keys")
    t = state.step + 1
    new_m, new_v, new_p = {}, {}, {}
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=float)
        p = np.asarray(p, dtype=float)
        if g.shape != p.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} shape {p.shape}"
            )
        m = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        new_m[name] = m
        new_v[name] = v
        new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return AdamState(m=new_m, v=new_v, step=t), new_p


@dataclass
class TrainTrace:
    """Per-evaluation training records, iteration-ordered."""

    iterations: list = field(default_factory=list)
    elbo: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    val_nll: list = field(default_factory=list)

    def append(self, iteration, elbo, wall_ms, val_rmse=np.nan, val_nll=np.nan):
        if self.iterations and iteration <= self.iterations[-1]:
            raise ParameterError("trace iterations must be strictly increasing")
        self.iterations.append(int(iteration))
        self.elbo.append(float(elbo))
        self.wall_ms.append(float(wall_ms))
        self.val_rmse.append(float(val_rmse))
        self.val_nll.append(float(val_nll))

    def __len__(self):
        return len(self.iterations)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,elbo,wall_ms,val_rmse,val_nll\n")
            for row in zip(
                self.iterations, self.elbo, self.wall_ms, self.val_rmse, self.val_nll
            ):
                fh.write("%d,%.17g,%.17g,%.17g,%.17g\n" % row)


def _minibatches(n: int, batch_size: int, rng):
    """Endless batch-index stream: a fresh seeded permutation every epoch."""
    while True:
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            yield order[lo : lo + batch_size]


def _training_arrays(data):
    """Accept a Dataset-like object or a bare (X, y) pair."""
    if isinstance(data, tuple):
        X, y = data
        return np.asarray(X, float), np.asarray(y, float), None, None
    X = np.asarray(data.X_train, dtype=float)
    y = np.asarray(data.y_train, dtype=float)
    Xv = getattr(data, "X_val", None)
    yv = getattr(data, "y_val", None)
    if Xv is not None and len(Xv) == 0:
        Xv = yv = None
    return X, y, Xv, yv


def _validation_metrics(model, Xv, yv):
    mean, var = gp.predict(model, Xv)
    lik = model.current_likelihood()
    nll = -float(np.mean(lik.log_pred_density(yv, mean, var)))
    if lik.kind == "gaussian":
        rmse = float(np.sqrt(np.mean((mean - yv) ** 2)))
    else:
        rmse = np.nan  # not meaningful for binary labels
    return rmse, nll


def fit(model, data, config: TrainConfig):
    """Maximize the bound by minibatch Adam; returns (model, TrainTrace).

    The model is updated in place.  The traced bound value at iteration i
    is the minibatch estimate that produced step i, evaluated before the
    step; validation metrics are computed at the post-step parameters.
    """
    X, y, Xv, yv = _training_arrays(data)
    n = X.shape[0]
    if config.batch_size > n:
        raise ParameterError(f"batch_size {config.batch_size} exceeds dataset size {n}")

    rng = seed_stream(config.seed, "minibatch")
    batches = _minibatches(n, config.batch_size, rng)
    state = AdamState.init(gp.params(model))
    trace = TrainTrace()
    last_good = gp.to_checkpoint(model)
    start = time.perf_counter()

    for it in range(config.iterations):
        idx = next(batches)
        try:
            value, grads = gp.elbo_grad(model, X[idx], y[idx], data_size=n)
            if not np.isfinite(value):
                raise TrainingError(it, f"non-finite bound estimate {value!r}", last_good)
            for name, g in grads.items():
                if not np.all(np.isfinite(g)):
                    raise TrainingError(it, f"non-finite gradient for {name!r}", last_good)
            live = gp.params(model)
            neg = {name: -np.asarray(g, dtype=float) for name, g in grads.items()}
            state, updated = adam_step(state, live, neg, config.rate_at(it))
            gp.set_params(model, updated)
        except TrainingError:
            raise
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            raise TrainingError(it, str(exc), last_good) from exc

        if (it + 1) % config.eval_every == 0 or it + 1 == config.iterations:
            wall = (time.perf_counter() - start) * 1e3
            if Xv is not None:
                rmse, nll = _validation_metrics(model, Xv, yv)
            else:
                rmse = nll = np.nan
            trace.append(it + 1, value, wall, rmse, nll)
            last_good = gp.to_checkpoint(model)

    return model, trace


def finite_diff_grad(objective, params: dict, eps: float = 1e-5) -> dict:
    """Central-difference gradient of a scalar objective over a parameter dict.

    Test oracle only: cost is two objective calls per scalar coordinate.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    out = {}
    base = {k: np.array(v, dtype=float) for k, v in params.items()}
    for name, val in base.items():
        grad = np.zeros_like(val)
        flat = grad.reshape(-1)
        for i in range(flat.size):
            probe = {k: v.copy() for k, v in base.items()}
            probe[name].reshape(-1)[i] += eps
            hi = objective(probe)
            probe[name].reshape(-1)[i] -= 2 * eps
            lo = objective(probe)
            flat[i] = (hi - lo) / (2 * eps)
        out[name] = grad
    return out
