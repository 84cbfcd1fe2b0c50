"""Per-case contextual bandit over candidate fact nodes.

Each consultation case gets its own small reward network. An arm is one
candidate node; its context is the concatenation of the case text
embedding, the node's graph-encoded row, and the attention readout, so the
bandit sees exactly what the node scorer saw. The upper confidence bound
uses a diagonal curvature accumulator: one nonnegative entry per network
parameter, started at the regularizer kappa and grown by the squared
gradient of every played context. Selection is pure; only updates mutate
state.

Rewards fuse two channels: the node scorer's probability for the arm and
the reading-comprehension gain of a view enhanced with that arm's fact,
weighted by lam. Both components are kept in every record so the fusion
can be recomputed exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    CheckpointError,
    DimensionMismatchError,
    EmptyArmSetError,
    HorizonExhaustedError,
    LexdiagError,
    NonFiniteLossError,
    OutOfRangeError,
)
from .gateway import LlmGateway, RcQuestionSet
from .graph import FactRuleGraph, NodeId
from .pu_model import PuModel, sigmoid
from .util import canonical_json, derive_seed

ARCHIVE_VERSION = 1


# ---------------------------------------------------------------------------
# rewards


@dataclass(frozen=True)
class Reward:
    r_pu: float
    r_lmrc: float
    lam: float
    r_total: float


def fuse_reward(r_pu: float, r_lmrc: float, lam: float = 0.5) -> Reward:
    if not 0.0 < r_pu < 1.0:
        raise OutOfRangeError(f"r_pu must lie strictly inside (0, 1), got {r_pu}")
    if not 0.0 <= r_lmrc <= 1.0:
        raise OutOfRangeError(f"r_lmrc must lie in [0, 1], got {r_lmrc}")
    if lam < 0.0:
        raise OutOfRangeError(f"lam must be nonnegative, got {lam}")
    return Reward(r_pu=r_pu, r_lmrc=r_lmrc, lam=lam,
                  r_total=r_pu + lam * r_lmrc)


# ---------------------------------------------------------------------------
# reward network: 2-layer perceptron, tanh hidden, scalar linear output


def init_reward_params(
    dim: int, hidden: int, seed: int, optimism: float = 0.0
) -> dict[str, np.ndarray]:
    # the feature weights of the output layer start at zero so every arm
    # opens with the same predicted value; that value is the reward ceiling,
    # so an arm the network has never seen stays attractive until the fit
    # pulls it down. Standard optimistic initialization; without it a few
    # unlucky feature draws can starve the best arm forever.
    rng = np.random.default_rng(seed)
    return {
        "w1": rng.standard_normal((hidden, dim)) / np.sqrt(dim),
        "b1": np.zeros(hidden),
        "w2": np.zeros(hidden),
        "b2": np.array([optimism]),
    }


def reward_value_and_grad(
    params: Mapping[str, np.ndarray], x: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    a = np.tanh(params["w1"] @ x + params["b1"])
    value = float(params["w2"] @ a + params["b2"][0])
    s = params["w2"] * (1.0 - a * a)
    grads = {
        "w1": np.outer(s, x),
        "b1": s,
        "w2": a,
        "b2": np.ones(1),
    }
    return value, grads


@dataclass(frozen=True)
class BanditConfig:
    hidden: int = 32
    nu: float = 1.0
    kappa: float = 1.0
    horizon: int = 50
    lr: float = 1e-2
    gd_steps: int = 20
    lam: float = 0.5
    seed: int = 0


@dataclass
class BanditState:
    case_id: str
    dim: int
    config: BanditConfig
    params: dict[str, np.ndarray]
    z_diag: dict[str, np.ndarray]
    t: int = 0
    history_x: list[np.ndarray] = field(default_factory=list)
    history_r: list[float] = field(default_factory=list)


def new_bandit(case_id: str, dim: int, config: BanditConfig) -> BanditState:
    seed = derive_seed(config.seed, "bandit", case_id)
    # rewards live in (0, 1 + lam]; start predictions at that ceiling
    params = init_reward_params(dim, config.hidden, seed,
                                optimism=1.0 + config.lam)
    z_diag = {name: np.full(arr.shape, config.kappa) for name, arr in params.items()}
    return BanditState(case_id=case_id, dim=dim, config=config,
                       params=params, z_diag=z_diag)


@dataclass(frozen=True)
class ArmContext:
    case_id: str
    arm: int
    node: NodeId
    x: np.ndarray


def ucb_select(
    state: BanditState, contexts: list[ArmContext]
) -> tuple[int, np.ndarray]:
    """Pick the arm with the highest optimistic value. Pure: no mutation."""
    if not contexts:
        raise EmptyArmSetError("no candidate arms to select from")
    values = np.empty(len(contexts))
    for j, ctx in enumerate(contexts):
        if ctx.x.shape != (state.dim,):
            raise DimensionMismatchError(
                f"arm {j} context has shape {ctx.x.shape}, "
                f"expected ({state.dim},)"
            )
        f, grads = reward_value_and_grad(state.params, ctx.x)
        bonus_sq = sum(
            float(np.sum(g * g / state.z_diag[name]))
            for name, g in grads.items()
        )
        values[j] = f + state.config.nu * np.sqrt(bonus_sq)
    if not np.all(np.isfinite(values)):
        raise NonFiniteLossError(
            f"reward network for {state.case_id!r} produced non-finite values"
        )
    # argmax takes the first maximum, which is the lowest arm index
    return int(np.argmax(values)), values


def ucb_update(
    state: BanditState, context: ArmContext, reward: Reward
) -> BanditState:
    """Record a played arm and refit the reward network on the full history."""
    if state.t >= state.config.horizon:
        raise HorizonExhaustedError(
            f"bandit for {state.case_id!r} has used all "
            f"{state.config.horizon} rounds"
        )
    state.history_x.append(np.array(context.x, dtype=float))
    state.history_r.append(reward.r_total)

    xs = np.stack(state.history_x)
    rs = np.array(state.history_r)
    p = state.params
    lr = state.config.lr
    for _ in range(state.config.gd_steps):
        act = np.tanh(xs @ p["w1"].T + p["b1"])
        fitted = act @ p["w2"] + p["b2"][0]
        # descent direction for the summed squared error, length-normalized
        # so the fixed step size stays stable as the history grows
        coeff = 2.0 * (fitted - rs) / len(rs)
        scaled = (1.0 - act * act) * p["w2"] * coeff[:, None]
        g_w2 = act.T @ coeff
        g_b2 = coeff.sum()
        g_w1 = scaled.T @ xs
        g_b1 = scaled.sum(axis=0)
        p["w2"] -= lr * g_w2
        p["b2"] -= lr * g_b2
        p["w1"] -= lr * g_w1
        p["b1"] -= lr * g_b1

    # curvature accumulates at the post-refit parameters
    _, grads = reward_value_and_grad(state.params, context.x)
    for name, g in grads.items():
        state.z_diag[name] += g * g
    state.t += 1
    return state


# ---------------------------------------------------------------------------
# contexts and rewards from the scorer and the gateway


def build_arm_contexts(
    model: PuModel,
    graph: FactRuleGraph,
    h_text: np.ndarray,
    candidates: Iterable[NodeId],
) -> tuple[list[ArmContext], np.ndarray]:
    """Context vectors [h_text, H_node, Z] plus the scorer probabilities."""
    nodes = list(candidates)
    cache = model.forward(graph, h_text, scored=nodes)
    h_nodes = cache.conv_out[-1]
    row_of = {node: i for i, node in enumerate(cache.order)}
    case_id = graph.case_id or ""
    contexts = [
        ArmContext(
            case_id=case_id,
            arm=j,
            node=node,
            x=np.concatenate([cache.h_text, h_nodes[row_of[node]], cache.z]),
        )
        for j, node in enumerate(nodes)
    ]
    return contexts, sigmoid(cache.logits)


@dataclass(frozen=True)
class BanditTrainCase:
    case_id: str
    graph: FactRuleGraph
    h_text: np.ndarray
    candidates: tuple[NodeId, ...]
    base_view: str
    questions: RcQuestionSet


@dataclass
class PurlResult:
    states: dict[str, BanditState]
    logs: list[dict]
    regret: dict[str, list[float]]
    rewards: dict[str, list[Reward]]


def train_purl(
    cases: list[BanditTrainCase],
    model: PuModel,
    gateway: LlmGateway,
    config: BanditConfig,
) -> PurlResult:
    """Train one bandit per case over its candidate arms.

    Arm rewards are deterministic for a given (case, arm) pair, so they are
    computed once up front; the selection loop then replays them. Regret is
    measured against the best arm by total reward.
    """
    states: dict[str, BanditState] = {}
    logs: list[dict] = []
    regret: dict[str, list[float]] = {}
    rewards_by_case: dict[str, list[Reward]] = {}

    for case in cases:
        if not case.candidates:
            raise EmptyArmSetError(f"case {case.case_id!r} has no candidates")
        contexts, pu_scores = build_arm_contexts(
            model, case.graph, case.h_text, case.candidates
        )
        arm_rewards: list[Reward] = []
        for j, node in enumerate(case.candidates):
            try:
                enhanced, _ = gateway.enhanced_view(
                    case.case_id, case.base_view, node.label
                )
                rc = gateway.rc_score(
                    enhanced, case.questions, case_id=case.case_id
                )
            except LexdiagError as exc:
                raise type(exc)(
                    f"case {case.case_id!r}, arm {j} ({node.label!r}): {exc}"
                ) from exc
            arm_rewards.append(
                fuse_reward(float(pu_scores[j]), rc.score, config.lam)
            )
        best_total = max(r.r_total for r in arm_rewards)

        state = new_bandit(case.case_id, contexts[0].x.shape[0], config)
        trace: list[float] = []
        for _ in range(config.horizon):
            chosen, _ = ucb_select(state, contexts)
            reward = arm_rewards[chosen]
            ucb_update(state, contexts[chosen], reward)
            logs.append(
                {
                    "case_id": case.case_id,
                    "t": state.t,
                    "arm": chosen,
                    "r_pu": reward.r_pu,
                    "r_lmrc": reward.r_lmrc,
                    "r_total": reward.r_total,
                }
            )
            trace.append(best_total - reward.r_total)
        states[case.case_id] = state
        regret[case.case_id] = trace
        rewards_by_case[case.case_id] = arm_rewards

    return PurlResult(states=states, logs=logs, regret=regret,
                      rewards=rewards_by_case)


def write_training_log(path: str | Path, logs: list[dict]) -> None:
    text = "".join(canonical_json(row) + "\n" for row in logs)
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# archive: every case's bandit in one file, plus case text embeddings so an
# unseen narrative can borrow the nearest case's bandit


def save_bandits(
    path: str | Path,
    states: Mapping[str, BanditState],
    case_embeddings: Mapping[str, np.ndarray],
) -> None:
    case_ids = sorted(states)
    if set(case_embeddings) != set(case_ids):
        raise CheckpointError("case embeddings must cover exactly the bandit cases")
    first = states[case_ids[0]] if case_ids else None
    meta = {
        "version": ARCHIVE_VERSION,
        "kind": "bandit-archive",
        "cases": case_ids,
        "dim": first.dim if first else 0,
        "config": {
            "hidden": first.config.hidden if first else 0,
            "nu": first.config.nu if first else 0.0,
            "kappa": first.config.kappa if first else 0.0,
            "horizon": first.config.horizon if first else 0,
            "lr": first.config.lr if first else 0.0,
            "gd_steps": first.config.gd_steps if first else 0,
            "lam": first.config.lam if first else 0.0,
            "seed": first.config.seed if first else 0,
        },
    }
    arrays: dict[str, np.ndarray] = {
        "__meta__": np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
        )
    }
    for i, case_id in enumerate(case_ids):
        state = states[case_id]
        if state.dim != meta["dim"] or state.config != first.config:
            raise CheckpointError("bandit states in one archive must share config")
        prefix = f"c{i}_"
        for name, arr in state.params.items():
            arrays[prefix + "p_" + name] = arr
        for name, arr in state.z_diag.items():
            arrays[prefix + "z_" + name] = arr
        arrays[prefix + "t"] = np.array([state.t], dtype=np.int64)
        arrays[prefix + "hx"] = (
            np.stack(state.history_x)
            if state.history_x
            else np.zeros((0, state.dim))
        )
        arrays[prefix + "hr"] = np.array(state.history_r)
        arrays[prefix + "emb"] = np.asarray(case_embeddings[case_id], dtype=float)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_bandits(
    path: str | Path,
) -> tuple[dict[str, BanditState], dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"bandit archive {path} does not exist")
    with np.load(path) as data:
        if "__meta__" not in data:
            raise CheckpointError(f"archive {path} has no metadata record")
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("version") != ARCHIVE_VERSION:
            raise CheckpointError(
                f"archive version {meta.get('version')!r} unsupported"
            )
        config = BanditConfig(**meta["config"])
        states: dict[str, BanditState] = {}
        embeddings: dict[str, np.ndarray] = {}
        for i, case_id in enumerate(meta["cases"]):
            prefix = f"c{i}_"
            try:
                params = {
                    name: data[prefix + "p_" + name].copy()
                    for name in ("w1", "b1", "w2", "b2")
                }
                z_diag = {
                    name: data[prefix + "z_" + name].copy()
                    for name in ("w1", "b1", "w2", "b2")
                }
                states[case_id] = BanditState(
                    case_id=case_id,
                    dim=int(meta["dim"]),
                    config=config,
                    params=params,
                    z_diag=z_diag,
                    t=int(data[prefix + "t"][0]),
                    history_x=list(data[prefix + "hx"]),
                    history_r=[float(r) for r in data[prefix + "hr"]],
                )
                embeddings[case_id] = data[prefix + "emb"].copy()
            except KeyError as exc:
                raise CheckpointError(
                    f"archive {path} is missing tensor {exc}"
                ) from None
    return states, embeddings


def nearest_case(
    embedding: np.ndarray, case_embeddings: Mapping[str, np.ndarray]
) -> str:
    """Case id whose stored text embedding is closest by cosine similarity.

    Ties resolve to the lexicographically smallest case id.
    """
    if not case_embeddings:
        raise CheckpointError("bandit archive holds no cases")
    norm = float(np.linalg.norm(embedding))
    best_id = ""
    best_sim = -np.inf
    for case_id in sorted(case_embeddings):
        other = case_embeddings[case_id]
        denom = norm * float(np.linalg.norm(other))
        sim = float(embedding @ other) / denom if denom > 0 else -1.0
        if sim > best_sim:
            best_sim = sim
            best_id = case_id
    return best_id
