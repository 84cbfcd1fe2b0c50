"""Positive-unlabeled training for the node relevance scorer.

Masked nodes are the only labeled positives; every other scored node is
unlabeled, a mixture of relevant and irrelevant. The risk estimator treats
the unlabeled mean as a biased stand-in for the negative risk and subtracts
the positive contribution, clamping the corrected term at zero:

    risk = prior * mean_p l(z, +1)
           + max(0, mean_u l(z, -1) - prior * mean_p l(z, -1))

with the logistic surrogate l(z, +1) = sigmoid(-z), l(z, -1) = sigmoid(z) on
pre-squash logits. When the inner term goes negative the estimator is being
dragged below zero by overfitting to the labeled positives; the training
step then follows the negated inner term with a discounted learning rate
instead of the clamped objective, which would have a dead gradient.

The plain negative baseline (every unlabeled node treated as a true
negative) trains the same architecture with ordinary mean logistic risk and
exists for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyNodeSetError, NonFiniteLossError
from .graph import FactRuleGraph, NodeId
from .pu_model import PuModel, PuModelConfig, sigmoid
from .util import derive_seed


# ---------------------------------------------------------------------------
# risk estimators on logits


@dataclass(frozen=True)
class RiskBreakdown:
    risk: float
    positive_risk: float
    inner: float  # unclipped corrected negative risk
    used_correction: bool  # inner was negative and got clamped


def nnpu_risk(
    logits: np.ndarray, n_positive: int, prior: float
) -> RiskBreakdown:
    """Non-negative PU risk. Logits are ordered positives first."""
    logits = np.asarray(logits, dtype=float)
    n_p = int(n_positive)
    n_u = len(logits) - n_p
    if n_p < 1 or n_u < 1:
        raise EmptyNodeSetError(
            f"risk needs at least one positive and one unlabeled, "
            f"got {n_p} and {n_u}"
        )
    if not 0.0 < prior < 1.0:
        raise ValueError(f"class prior must lie in (0, 1), got {prior}")
    z_p, z_u = logits[:n_p], logits[n_p:]
    pos_risk = prior * float(np.mean(sigmoid(-z_p)))
    inner = float(np.mean(sigmoid(z_u))) - prior * float(np.mean(sigmoid(z_p)))
    risk = pos_risk + max(0.0, inner)
    return RiskBreakdown(risk, pos_risk, inner, inner < 0.0)


def nnpu_risk_grad(
    logits: np.ndarray, n_positive: int, prior: float
) -> tuple[RiskBreakdown, np.ndarray]:
    """Risk breakdown plus the objective gradient on the logits.

    On the normal branch the gradient is that of the full risk. On the
    correction branch it is the gradient of the negated inner term; the
    caller is responsible for discounting that step.
    """
    breakdown = nnpu_risk(logits, n_positive, prior)
    logits = np.asarray(logits, dtype=float)
    n_p = int(n_positive)
    n_u = len(logits) - n_p
    z_p, z_u = logits[:n_p], logits[n_p:]
    # sigmoid'(z) is symmetric, so both surrogate terms share it
    dsig_p = sigmoid(z_p) * (1.0 - sigmoid(z_p))
    dsig_u = sigmoid(z_u) * (1.0 - sigmoid(z_u))
    grad = np.zeros_like(logits)
    if not breakdown.used_correction:
        # positive surrogate and the subtracted negative surrogate both pull
        grad[:n_p] = -2.0 * (prior / n_p) * dsig_p
        grad[n_p:] = dsig_u / n_u
    else:
        # follow -(inner) = prior * mean sigmoid(z_p) - mean sigmoid(z_u)
        grad[:n_p] = (prior / n_p) * dsig_p
        grad[n_p:] = -dsig_u / n_u
    return breakdown, grad


def pn_risk_grad(
    logits: np.ndarray, n_positive: int
) -> tuple[float, np.ndarray]:
    """Mean logistic risk with unlabeled nodes taken as negatives."""
    logits = np.asarray(logits, dtype=float)
    n = len(logits)
    n_p = int(n_positive)
    if n_p < 1 or n - n_p < 1:
        raise EmptyNodeSetError("baseline risk needs both groups nonempty")
    z_p, z_u = logits[:n_p], logits[n_p:]
    risk = float(np.sum(sigmoid(-z_p)) + np.sum(sigmoid(z_u))) / n
    grad = np.empty(n)
    grad[:n_p] = -sigmoid(z_p) * (1.0 - sigmoid(z_p)) / n
    grad[n_p:] = sigmoid(z_u) * (1.0 - sigmoid(z_u)) / n
    return risk, grad


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam over a name -> array parameter dict, updates in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr_scale: float = 1.0) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, param in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            param -= (self.lr * lr_scale) * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class PuTrainCase:
    """One case's training view: expanded subgraph plus labeled node split."""

    case_id: str
    graph: FactRuleGraph
    h_text: np.ndarray
    positives: tuple[NodeId, ...]
    unlabeled: tuple[NodeId, ...]


@dataclass
class PuTrainConfig:
    epochs: int = 100
    lr: float = 1e-4
    correction_discount: float = 0.1  # step discount on the correction branch
    batch_size: int = 2000  # node instances per optimizer step
    prior: float | None = None  # None: per-case empirical n_p / (n_p + n_u)
    seed: int = 0


@dataclass
class StepRecord:
    case_id: str
    epoch: int
    risk: float
    inner: float
    used_correction: bool


@dataclass
class PuTrainResult:
    model: PuModel
    steps: list[StepRecord] = field(default_factory=list)


def _case_chunks(case: PuTrainCase, batch_size: int):
    """Split one case's scored nodes into optimizer-step sized chunks.

    Each chunk keeps at least one positive and one unlabeled node so the
    risk stays defined. At normal corpus scale a case fits in one chunk.
    """
    pos = sorted(case.positives)
    unl = sorted(case.unlabeled)
    if len(pos) + len(unl) <= batch_size:
        yield pos, unl
        return
    unl_per = max(1, batch_size - len(pos))
    for start in range(0, len(unl), unl_per):
        yield pos, unl[start : start + unl_per]


def train_domain_pu(
    model: PuModel, cases: list[PuTrainCase], config: PuTrainConfig
) -> PuTrainResult:
    """Epochs of per-case risk steps with a shared parameter set.

    Case order is reshuffled each epoch from the training seed, so a run is
    reproducible end to end. Raises NonFiniteLossError the moment a risk
    value stops being finite, with the offending case in the message.
    """
    if not cases:
        raise EmptyNodeSetError("no training cases")
    optimizer = Adam(model.params(), lr=config.lr)
    result = PuTrainResult(model=model)
    case_ids = sorted(range(len(cases)), key=lambda i: cases[i].case_id)
    for epoch in range(config.epochs):
        rng = np.random.default_rng(derive_seed(config.seed, "epoch", str(epoch)))
        order = rng.permutation(len(case_ids))
        for pos_in_order in order:
            case = cases[case_ids[pos_in_order]]
            for pos, unl in _case_chunks(case, config.batch_size):
                if not pos or not unl:
                    continue
                prior = config.prior
                if prior is None:
                    prior = len(pos) / (len(pos) + len(unl))
                scored = list(pos) + list(unl)
                cache = model.forward(case.graph, case.h_text, scored)
                breakdown, dlogits = nnpu_risk_grad(cache.logits, len(pos), prior)
                if not np.isfinite(breakdown.risk):
                    raise NonFiniteLossError(
                        f"risk became {breakdown.risk} on case {case.case_id} "
                        f"epoch {epoch}"
                    )
                grads = model.backward(cache, dlogits)
                scale = (
                    config.correction_discount if breakdown.used_correction else 1.0
                )
                optimizer.step(grads, lr_scale=scale)
                result.steps.append(
                    StepRecord(
                        case_id=case.case_id,
                        epoch=epoch,
                        risk=breakdown.risk,
                        inner=breakdown.inner,
                        used_correction=breakdown.used_correction,
                    )
                )
    return result


def train_domain_pn(
    model: PuModel, cases: list[PuTrainCase], config: PuTrainConfig
) -> PuTrainResult:
    """Baseline trainer: unlabeled nodes taken as ground-truth negatives."""
    if not cases:
        raise EmptyNodeSetError("no training cases")
    optimizer = Adam(model.params(), lr=config.lr)
    result = PuTrainResult(model=model)
    case_ids = sorted(range(len(cases)), key=lambda i: cases[i].case_id)
    for epoch in range(config.epochs):
        rng = np.random.default_rng(derive_seed(config.seed, "epoch", str(epoch)))
        order = rng.permutation(len(case_ids))
        for pos_in_order in order:
            case = cases[case_ids[pos_in_order]]
            for pos, unl in _case_chunks(case, config.batch_size):
                if not pos or not unl:
                    continue
                scored = list(pos) + list(unl)
                cache = model.forward(case.graph, case.h_text, scored)
                risk, dlogits = pn_risk_grad(cache.logits, len(pos))
                if not np.isfinite(risk):
                    raise NonFiniteLossError(
                        f"baseline risk became {risk} on case {case.case_id}"
                    )
                grads = model.backward(cache, dlogits)
                optimizer.step(grads)
                result.steps.append(
                    StepRecord(case.case_id, epoch, risk, 0.0, False)
                )
    return result


def evaluate_case_scores(
    model: PuModel, cases: list[PuTrainCase]
) -> tuple[np.ndarray, np.ndarray]:
    """Scores and 0/1 labels over every scored node of the given cases."""
    scores: list[float] = []
    labels: list[int] = []
    for case in cases:
        scored = sorted(case.positives) + sorted(case.unlabeled)
        probs = model.scores(case.graph, case.h_text, scored)
        scores.extend(float(p) for p in probs)
        labels.extend([1] * len(case.positives) + [0] * len(case.unlabeled))
    return np.asarray(scores), np.asarray(labels, dtype=int)
