"""Federated training on synthetic convex tasks with secure aggregation.

Users send gradients. The server decodes either their sum (divided by the
survivor count) or a median-of-coalition-averages estimate, then takes a
gradient step. Everything downstream of ``RoundConfig.seed`` is
deterministic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .analysis import communication_report
from .byzantine import AttackSpec, inject_attack, robust_aggregate
from .errors import ConfigError, ProtocolError
from .protocol import RoundPlan, Topology, reassemble, run_round, setup_round
from .quantization import QuantizerSpec

CSV_COLUMNS = ("round", "loss", "optimality_gap", "survivors", "dropped",
               "leakage_events", "bits_by_group")


# --------------------------------------------------------------------------
# Tasks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    """Synthetic learning problem.

    Attributes:
        kind: ``quadratic`` or ``logistic_blobs``.
        samples_per_user: Local dataset size.
        batch_size: Minibatch size; None means full local batch.
        curvature: (low, high) range of the diagonal Hessian (quadratic).
        spread: Half-width of the box the quadratic targets are drawn from.
        separation: Distance of each blob mean from the origin (logistic).
        noise: Std of the blob features (logistic).
        l2: Ridge penalty (logistic).
    """

    kind: str = "quadratic"
    samples_per_user: int = 20
    batch_size: int | None = None
    curvature: tuple[float, float] = (0.2, 1.0)
    spread: float = 0.4
    separation: float = 1.0
    noise: float = 1.0
    l2: float = 0.01

    def __post_init__(self):
        if self.kind not in ("quadratic", "logistic_blobs"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.samples_per_user < 1:
            raise ConfigError("samples_per_user must be >= 1")
        if self.batch_size is not None and not 1 <= self.batch_size <= self.samples_per_user:
            raise ConfigError("batch_size must lie in [1, samples_per_user]")
        lo, hi = self.curvature
        if not 0 < lo <= hi:
            raise ConfigError("curvature range must satisfy 0 < low <= high")


class QuadraticTask:
    """F_i(theta) = mean_j 0.5 (theta - a_ij)^T D (theta - a_ij)."""

    def __init__(self, spec: TaskSpec, N: int, m: int, rng: np.random.Generator):
        self.spec = spec
        self.D = rng.uniform(spec.curvature[0], spec.curvature[1], size=m)
        self.A = rng.uniform(-spec.spread, spec.spread, size=(N, spec.samples_per_user, m))
        self.theta_star = self.A.reshape(-1, m).mean(axis=0)
        self.L = float(self.D.max())
        self.F_star = self.loss(self.theta_star)

    def loss(self, theta) -> float:
        d = self.A - theta
        return float(0.5 * np.mean(np.sum(self.D * d * d, axis=2)))

    def gradient(self, user: int, theta, rng: np.random.Generator, flip_labels: bool = False) -> np.ndarray:
        a = self.A[user]
        if self.spec.batch_size is not None:
            a = a[rng.choice(len(a), self.spec.batch_size, replace=False)]
        return self.D * (theta - a.mean(axis=0))


class LogisticBlobsTask:
    """Two Gaussian blobs, labels in {0, 1}, ridge-regularized log loss.

    The last model coordinate is a bias; the other m-1 are feature weights.
    Flipped labels are 1 - y.
    """

    def __init__(self, spec: TaskSpec, N: int, m: int, rng: np.random.Generator):
        if m < 2:
            raise ConfigError("logistic task needs m >= 2 (weights plus bias)")
        self.spec = spec
        n = spec.samples_per_user
        direction = rng.normal(size=m - 1)
        direction /= np.linalg.norm(direction)
        y = rng.integers(0, 2, size=(N, n))
        feats = rng.normal(0.0, spec.noise, size=(N, n, m - 1))
        feats += np.where(y[..., None] == 1, 1.0, -1.0) * spec.separation * direction
        self.X = np.concatenate([feats, np.ones((N, n, 1))], axis=2)
        self.y = y.astype(np.float64)
        flat = self.X.reshape(-1, m)
        self.L = float(0.25 * np.linalg.eigvalsh(flat.T @ flat / len(flat)).max() + spec.l2)
        self.theta_star = None
        self.F_star = None

    def loss(self, theta) -> float:
        z = self.X @ theta
        ll = np.logaddexp(0.0, z) - self.y * z
        return float(ll.mean() + 0.5 * self.spec.l2 * theta @ theta)

    def gradient(self, user: int, theta, rng: np.random.Generator, flip_labels: bool = False) -> np.ndarray:
        X, y = self.X[user], self.y[user]
        if flip_labels:
            y = 1.0 - y
        if self.spec.batch_size is not None:
            idx = rng.choice(len(y), self.spec.batch_size, replace=False)
            X, y = X[idx], y[idx]
        p = 1.0 / (1.0 + np.exp(-(X @ theta)))
        return X.T @ (p - y) / len(y) + self.spec.l2 * theta


def make_task(spec: TaskSpec, N: int, m: int, rng: np.random.Generator):
    if spec.kind == "quadratic":
        return QuadraticTask(spec, N, m, rng)
    return LogisticBlobsTask(spec, N, m, rng)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundConfig:
    """Full description of one training run.

    Topology is given by exactly one of: ``n`` (G equal groups), ``L`` with
    ``nbar`` (equal subgroups), or ``group_sizes``.

    Attributes:
        G: Number of groups (quantizers).
        K: Quantizer levels per group, non-decreasing.
        m: Model length.
        n: Users per group.
        L: Subgroups per group.
        nbar: Users per subgroup.
        group_sizes: Users per group when groups differ in size.
        r1: Lower clipping bound for updates.
        r2: Upper clipping bound.
        dropout: Per-user, per-round dropout probability.
        attack: Byzantine users and their behaviour.
        aggregator: ``mean`` or ``median``.
        lr: Step size; None means 1/L of the task.
        rounds: Number of training rounds J.
        task: Synthetic task.
        seed: Master seed.
        threshold: Secret-sharing threshold override.
        rates: Per-group upload rate in bit/s for time estimates.
        name: Label used in comparison tables.
    """

    G: int = 5
    K: tuple[int, ...] = (2, 6, 8, 10, 12)
    m: int = 20
    n: int | None = 2
    L: tuple[int, ...] | None = None
    nbar: int | None = None
    group_sizes: tuple[int, ...] | None = None
    r1: float = -1.0
    r2: float = 1.0
    dropout: float = 0.0
    attack: AttackSpec = field(default_factory=AttackSpec)
    aggregator: str = "mean"
    lr: float | None = None
    rounds: int = 100
    task: TaskSpec = field(default_factory=TaskSpec)
    seed: int = 0
    threshold: int | None = None
    rates: tuple[float, ...] | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "K", tuple(int(k) for k in self.K))
        if len(self.K) != self.G:
            raise ConfigError(f"need {self.G} quantizer levels, got {len(self.K)}")
        if any(b < a for a, b in zip(self.K, self.K[1:])):
            raise ConfigError("quantizer levels must not decrease across groups")
        if any(k < 2 for k in self.K):
            raise ConfigError("every quantizer needs K >= 2")
        given = sum(x is not None for x in (self.L, self.group_sizes))
        if given > 1:
            raise ConfigError("give only one of L/nbar or group_sizes")
        if self.L is not None and (self.nbar is None or len(self.L) != self.G):
            raise ConfigError("L needs one entry per group and nbar")
        if self.group_sizes is not None and len(self.group_sizes) != self.G:
            raise ConfigError("group_sizes needs one entry per group")
        if self.L is None and self.group_sizes is None and self.n is None:
            raise ConfigError("topology needs n, L/nbar or group_sizes")
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError("dropout must lie in [0, 1]")
        if self.aggregator not in ("mean", "median"):
            raise ConfigError(f"aggregator must be mean or median, got {self.aggregator!r}")
        if self.lr is not None and not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.r1 >= self.r2:
            raise ConfigError("need r1 < r2")
        if self.rates is not None and (len(self.rates) != self.G or any(r <= 0 for r in self.rates)):
            raise ConfigError("rates need one positive entry per group")
        self.attack.validate(self.N)

    def topology(self) -> Topology:
        if self.L is not None:
            return Topology.from_subgroups(self.L, self.nbar)
        if self.group_sizes is not None:
            return Topology.from_group_sizes(self.group_sizes)
        return Topology.from_uniform(self.G, self.n)

    @property
    def N(self) -> int:
        if self.L is not None:
            return sum(self.L) * (self.nbar or 0)
        if self.group_sizes is not None:
            return sum(self.group_sizes)
        return self.G * (self.n or 0)

    def quantizers(self) -> list[QuantizerSpec]:
        return [QuantizerSpec(k, self.r1, self.r2) for k in self.K]

    def plan(self, m: int | None = None) -> RoundPlan:
        return RoundPlan.build(self.topology(), self.quantizers(), self.m if m is None else m)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


@dataclass
class RunResult:
    """Round log plus the iterates needed for convergence checks."""

    config: RoundConfig
    rows: list[dict]
    thetas: list[np.ndarray] = field(repr=False)
    theta_star: np.ndarray | None = field(repr=False)
    F_star: float | None
    L: float
    lr: float
    task: object = field(repr=False, default=None)

    @property
    def final_loss(self) -> float:
        return self.rows[-1]["loss"]

    def average_iterate(self) -> np.ndarray:
        """Mean of theta^(1..J)."""
        return np.mean(self.thetas[1:], axis=0)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([int(seed)] + [int(t) for t in tags])


def run_training(config: RoundConfig) -> RunResult:
    """Run ``config.rounds`` rounds and log one row per round.

    Raises:
        ProtocolError: if a round cannot be decoded; the message names the round.
    """
    plan = config.plan()
    N, m = plan.N, plan.m
    task = make_task(config.task, N, m, _stream(config.seed, 1))
    users = setup_round(plan.topology, _stream(config.seed, 2), threshold=config.threshold)
    lr = config.lr if config.lr is not None else 1.0 / task.L
    byz = set(config.attack.byzantine) if config.attack.active else set()
    theta = np.zeros(m)
    thetas = [theta.copy()]
    rows = []
    for t in range(config.rounds):
        drop_rng = _stream(config.seed, 3, t)
        dropped = {u for u in range(N) if drop_rng.random() < config.dropout} if config.dropout > 0 else set()
        updates = []
        for u in range(N):
            r = _stream(config.seed, 4, t, u)
            flip = u in byz and config.attack.kind == "label_flip"
            g = task.gradient(u, theta, r, flip_labels=flip)
            if u in byz:
                g = inject_attack(g, config.attack, r)
            updates.append(g)
        qrngs = [_stream(config.seed, 5, t, u) for u in range(N)]
        try:
            outcome = run_round(users, updates, plan, qrngs, dropped, round_index=t)
            if config.aggregator == "median":
                step = robust_aggregate(outcome)
            else:
                step = reassemble(outcome) / len(outcome.survivors)
        except ProtocolError as exc:
            raise type(exc)(f"round {t}: {exc}") from exc
        theta = theta - lr * step
        thetas.append(theta.copy())
        loss = task.loss(theta)
        bits = []
        for g in range(plan.topology.G):
            members = [u for c, us in enumerate(plan.topology.column_members)
                       if plan.topology.column_groups[c] == g for u in us]
            sent = [outcome.bits_per_user.get(u, 0) for u in members]
            bits.append(max(sent) if sent else 0)
        rows.append({
            "round": t + 1,
            "loss": loss,
            "optimality_gap": None if task.F_star is None else loss - task.F_star,
            "survivors": len(outcome.survivors),
            "dropped": len(outcome.dropped),
            "leakage_events": len(outcome.leakage_events),
            "bits_by_group": ";".join(str(b) for b in bits),
        })
    return RunResult(config, rows, thetas, getattr(task, "theta_star", None), task.F_star,
                     task.L, lr, task)


def run_fedavg_oracle(config: RoundConfig) -> list[np.ndarray]:
    """Plain averaged gradient descent on the same task, no quantization or masks.

    Ignores attacks and dropouts; the comparison only makes sense without them.
    """
    N, m = config.N, config.m
    task = make_task(config.task, N, m, _stream(config.seed, 1))
    lr = config.lr if config.lr is not None else 1.0 / task.L
    theta = np.zeros(m)
    out = [theta.copy()]
    for t in range(config.rounds):
        grads = [np.clip(task.gradient(u, theta, _stream(config.seed, 4, t, u)), config.r1, config.r2)
                 for u in range(N)]
        theta = theta - lr * np.mean(grads, axis=0)
        out.append(theta.copy())
    return out


def convergence_bound(result: RunResult, sigma: float) -> tuple[float, float]:
    """(observed gap at the averaged iterate, right-hand side of the bound)."""
    if result.F_star is None:
        raise ConfigError("bound needs a task with a known optimum")
    theta_bar = result.average_iterate()
    lhs = result.task.loss(theta_bar) - result.F_star
    J = len(result.thetas) - 1
    dist = float(np.sum((result.thetas[0] - result.theta_star) ** 2))
    rhs = dist / (2 * result.lr * J) + result.lr * sigma
    return lhs, rhs


# --------------------------------------------------------------------------
# Comparisons
# --------------------------------------------------------------------------


@dataclass
class ComparisonRow:
    name: str
    K: tuple[int, ...]
    final_loss: float | None
    bits_per_group: list[float]
    time_per_group: list[float]
    communication_time: float


def run_comparison(configs: Sequence[RoundConfig], train: bool = True,
                   comm_model_size: int | None = None, comm_rounds: int | None = None,
                   download_bits_per_element: int = 0) -> list[ComparisonRow]:
    """Train (optionally) and estimate communication time for each scenario.

    Communication time uses each config's ``rates`` and counts
    ``comm_rounds`` rounds (default ``config.rounds``) of a model with
    ``comm_model_size`` elements (default ``config.m``).
    """
    rows = []
    for cfg in configs:
        if cfg.rates is None:
            raise ConfigError(f"config {cfg.name or '?'} has no rates")
        final = run_training(cfg).final_loss if train else None
        plan = cfg.plan(comm_model_size)
        rep = communication_report(plan, cfg.rates, comm_rounds or cfg.rounds, download_bits_per_element)
        rows.append(ComparisonRow(cfg.name, cfg.K, final, rep.bits_per_group, rep.time_per_group,
                                  rep.total_time))
    return rows


def comparison_to_csv(rows: Sequence[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "K", "final_loss", "bits_by_group", "time_by_group_s", "communication_time_s"])
    for r in rows:
        w.writerow([r.name, ";".join(map(str, r.K)), _fmt(r.final_loss),
                    ";".join(_fmt(b) for b in r.bits_per_group),
                    ";".join(_fmt(t) for t in r.time_per_group), _fmt(r.communication_time)])
    return buf.getvalue()


def comm_time_scenarios(rounds: int = 200, G: int = 5, n: int = 5) -> list[RoundConfig]:
    """Heterogeneous, homogeneous K=2 and no-quantization (K=2^32) scenarios.

    Group 0 uploads at 1 Mb/s, the others at 2 Mb/s.
    """
    rates = (1e6,) + (2e6,) * (G - 1)
    base = RoundConfig(G=G, n=n, m=100, rounds=rounds, rates=rates)
    return [
        replace(base, K=(2, 6, 8, 10, 12), name="heterogeneous"),
        replace(base, K=(2,) * G, name="homogeneous_K2"),
        replace(base, K=(2 ** 32,) * G, name="no_quantization"),
    ]
