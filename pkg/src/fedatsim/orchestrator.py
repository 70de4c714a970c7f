"""The federated round loop: broadcast, local adversarial training, fuse, evaluate.

Every round the server sends the global weights to all clients; each client
runs a scheduled number of local epochs of (optionally adversarial) training on
its own shard; the server fuses the returned weights. With the curvature
fusion, clients additionally ship their Fisher diagonals and the next round's
local objective anchors each client to the others' previous weights.

Determinism: every random draw comes from a generator seeded by
(master seed, purpose tag, client, round, epoch), so results are a pure
function of the config regardless of worker-pool size or completion order.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .attack import AttackConfig, pgd_attack
from .data import (
    Dataset,
    Partition,
    PartitionSpec,
    load_csv,
    make_synthetic,
    partition_iid,
    partition_non_iid,
    split_holdout,
)
from .fusion import CurvContext, FusionPayload, curv_penalty, fedavg_fuse, fedcurv_fuse, fisher_diag
from .nn import Batch, ModelSpec, forward, init_params, loss_and_grads, mean_loss
from .optim import OptimizerState, init_state, step
from .schedule import epochs_for_round
from .svcca import drift_report

# Purpose tags keeping the derived seed streams disjoint.
_TAG_DATA, _TAG_TEST, _TAG_PARTITION, _TAG_INIT, _TAG_CLIENT, _TAG_EVAL = range(1, 7)

_EVAL_CHUNK = 256


class ClientError(RuntimeError):
    """A failure inside one client's local training, tagged with the client id."""

    def __init__(self, client_id: int, cause: BaseException):
        super().__init__(f"client {client_id}: {cause}")
        self.client_id = client_id


def derived_seed(master: int, *tags: int) -> int:
    """A stable 32-bit seed for one purpose, decorrelated from the master seed."""
    return int(np.random.SeedSequence((master, *tags)).generate_state(1)[0])


def _epoch_rng(master: int, client_id: int, round_idx: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((master, _TAG_CLIENT, client_id, round_idx, epoch))
    )


@dataclass
class ClientState:
    """One simulated device: a fixed shard plus optimizer state it may carry."""

    client_id: int
    shard: np.ndarray
    opt_state: OptimizerState | None = None


@dataclass
class RoundReport:
    """Metrics from one communication round."""

    round: int
    e_t: int
    nat_acc: float | None
    adv_acc: float | None
    mean_loss: float
    svcca: dict[int, float] = field(default_factory=dict)
    wall_time: float = 0.0

    def as_record(self) -> dict:
        """Serializable record; wall time is excluded so reruns match byte for byte."""
        rec = {
            "round": self.round,
            "e_t": self.e_t,
            "nat_acc": self.nat_acc,
            "adv_acc": self.adv_acc,
            "mean_loss": self.mean_loss,
        }
        for layer in sorted(self.svcca):
            rec[f"svcca_l{layer}"] = self.svcca[layer]
        return rec


@dataclass
class Experiment:
    """Everything built from a config: data, shards, model spec, resolved attack."""

    cfg: "ExperimentConfig"  # noqa: F821 - config module stays import-light
    spec: ModelSpec
    train: Dataset
    test: Dataset
    partition: Partition
    clients: list[ClientState]
    attack: AttackConfig


def build_experiment(cfg) -> Experiment:
    """Materialize dataset, partition and model from a validated config."""
    seed = cfg.run.seed
    d = cfg.data
    if d.source == "synthetic":
        train = make_synthetic(
            d.classes, d.per_class, d.input_dim, d.separation,
            seed=derived_seed(seed, _TAG_DATA), noise=d.noise,
        )
        test = make_synthetic(
            d.classes, d.test_per_class, d.input_dim, d.separation,
            seed=derived_seed(seed, _TAG_TEST), noise=d.noise,
        )
    else:
        full = load_csv(d.csv_path, rescale=d.rescale)
        train, test = split_holdout(full, d.holdout, seed=derived_seed(seed, _TAG_TEST))
    p = cfg.partition
    if p.kind == "non_iid":
        partition = partition_non_iid(
            train, PartitionSpec(p.clients, p.skew, seed=derived_seed(seed, _TAG_PARTITION))
        )
    else:
        partition = partition_iid(train, p.clients, seed=derived_seed(seed, _TAG_PARTITION))
    spec = ModelSpec(
        layer_sizes=(train.inputs.shape[1], *cfg.model.hidden, train.class_count),
        activation=cfg.model.activation,
        seed=derived_seed(seed, _TAG_INIT),
    )
    attack = replace(cfg.attack, input_range=train.input_range)
    clients = [ClientState(client_id=k, shard=shard) for k, shard in enumerate(partition.shards)]
    return Experiment(
        cfg=cfg, spec=spec, train=train, test=test,
        partition=partition, clients=clients, attack=attack,
    )


def local_adversarial_train(
    client: ClientState,
    params: np.ndarray,
    spec: ModelSpec,
    dataset: Dataset,
    e_t: int,
    attack_cfg: AttackConfig,
    opt_cfg,
    *,
    curv: CurvContext | None = None,
    natural: bool = False,
    master_seed: int = 0,
    round_idx: int = 0,
) -> tuple[np.ndarray, float]:
    """E_t local epochs on the client's shard; returns (weights, mean batch loss).

    Each minibatch is replaced by its adversarial counterpart (crafted at the
    current local weights) unless `natural` is set. With a curvature context
    the penalty gradient is added to the update, but the reported loss stays
    the plain data loss so runs remain comparable across fusion kinds.
    With e_t=0 the weights come back unchanged and the loss is nan.
    """
    if e_t < 0:
        raise ValueError("epoch count must be non-negative")
    if e_t == 0:
        return params.copy(), float("nan")
    try:
        if opt_cfg.reset_per_round or client.opt_state is None:
            client.opt_state = init_state(opt_cfg, params.size)
        state = client.opt_state
        theta = params.copy()
        losses = []
        for epoch in range(e_t):
            rng = _epoch_rng(master_seed, client.client_id, round_idx, epoch)
            order = client.shard.copy()
            rng.shuffle(order)
            for start in range(0, order.size, opt_cfg.batch_size):
                batch = dataset.batch(order[start : start + opt_cfg.batch_size])
                if not natural:
                    batch = pgd_attack(theta, spec, batch, attack_cfg, rng=rng)
                loss, grads = loss_and_grads(theta, spec, batch)
                grad = grads.param_grad
                if curv is not None and curv.lam > 0.0 and curv.anchors:
                    _, pen_grad = curv_penalty(theta, curv)
                    grad = grad + curv.lam * pen_grad
                theta = step(theta, grad, opt_cfg, state)
                losses.append(loss)
        return theta, float(np.mean(losses))
    except Exception as exc:
        raise ClientError(client.client_id, exc) from exc


def evaluate(
    params: np.ndarray,
    spec: ModelSpec,
    testset: Dataset | Batch,
    attack_cfg: AttackConfig | None = None,
    *,
    rng: np.random.Generator | None = None,
) -> tuple[float, float | None]:
    """(natural accuracy, adversarial accuracy or None when no attack is given)."""
    batch = testset.batch() if isinstance(testset, Dataset) else testset
    n = len(batch)
    if n == 0:
        raise ValueError("cannot evaluate on an empty set")
    nat_hits = 0
    adv_hits = 0
    for start in range(0, n, _EVAL_CHUNK):
        sub = Batch(batch.inputs[start : start + _EVAL_CHUNK], batch.labels[start : start + _EVAL_CHUNK])
        logits, _ = forward(params, spec, sub)
        nat_hits += int((logits.argmax(axis=1) == sub.labels).sum())
        if attack_cfg is not None:
            adv = pgd_attack(params, spec, sub, attack_cfg, rng=rng)
            logits, _ = forward(params, spec, adv)
            adv_hits += int((logits.argmax(axis=1) == adv.labels).sum())
    return nat_hits / n, (adv_hits / n if attack_cfg is not None else None)


def _train_one(ex: Experiment, client: ClientState, params, e_t, t, anchors):
    cfg = ex.cfg
    curv = None
    if cfg.fusion.kind == "fedcurv" and anchors is not None and cfg.fusion.lam > 0.0:
        others = [a for j, a in enumerate(anchors) if j != client.client_id]
        curv = CurvContext(cfg.fusion.lam, others)
    theta, loss = local_adversarial_train(
        client, params, ex.spec, ex.train, e_t, ex.attack, cfg.optim,
        curv=curv, natural=cfg.run.natural_training,
        master_seed=cfg.run.seed, round_idx=t,
    )
    fisher = None
    if cfg.fusion.kind == "fedcurv":
        try:
            fisher = fisher_diag(theta, ex.spec, ex.train.batch(client.shard))
        except Exception as exc:
            raise ClientError(client.client_id, exc) from exc
    return FusionPayload(params=theta, shard_size=client.shard.size, fisher_diag=fisher), loss


def _adv_eval_cfg(ex: Experiment) -> AttackConfig | None:
    """The attack to use at evaluation time, or None when adv accuracy is skipped."""
    mode = ex.cfg.run.adv_eval
    if mode == "off":
        return None
    if ex.cfg.run.natural_training and mode in ("auto", "zero"):
        return None
    return ex.attack


def run_round(
    ex: Experiment,
    t: int,
    params: np.ndarray,
    anchors: list[tuple[np.ndarray, np.ndarray]] | None = None,
    pool: ThreadPoolExecutor | None = None,
):
    """One communication round. Returns (next params, report, next anchors)."""
    cfg = ex.cfg
    start = time.perf_counter()
    e_t = epochs_for_round(t, cfg.schedule)
    jobs = (lambda f, it: pool.map(f, it)) if pool is not None else map
    results = list(jobs(lambda c: _train_one(ex, c, params, e_t, t, anchors), ex.clients))
    payloads = [payload for payload, _ in results]
    round_loss = float(np.mean([loss for _, loss in results]))
    if cfg.fusion.kind == "fedcurv":
        fused, next_anchors = fedcurv_fuse(payloads)
    else:
        fused, next_anchors = fedavg_fuse(payloads), None

    nat_acc = adv_acc = None
    if cfg.run.eval_every > 0 and ((t + 1) % cfg.run.eval_every == 0 or t + 1 == cfg.run.rounds):
        eval_attack = _adv_eval_cfg(ex)
        rng = None
        if eval_attack is not None and eval_attack.random_start:
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.run.seed, _TAG_EVAL, t))
            )
        nat_acc, adv_acc = evaluate(fused, ex.spec, ex.test, eval_attack, rng=rng)
        if adv_acc is None and cfg.run.natural_training and cfg.run.adv_eval == "zero":
            adv_acc = 0.0

    svcca_scores: dict[int, float] = {}
    if (
        cfg.run.svcca_every > 0
        and (t + 1) % cfg.run.svcca_every == 0
        and len(payloads) >= 2
    ):
        layers = list(cfg.run.svcca_layers) if cfg.run.svcca_layers else None
        drift = drift_report([p.params for p in payloads], ex.spec, ex.test.batch(), layers)
        svcca_scores = drift.mean_scores

    report = RoundReport(
        round=t, e_t=e_t, nat_acc=nat_acc, adv_acc=adv_acc,
        mean_loss=round_loss, svcca=svcca_scores,
        wall_time=time.perf_counter() - start,
    )
    return fused, report, next_anchors


def run_experiment(cfg, out_dir=None, workers: int | None = None):
    """All R rounds from a fresh init. Returns (reports, final params, experiment).

    With out_dir set, round records stream to metrics.jsonl as they complete, a
    summary CSV and final checkpoint are written at the end, and whatever
    rounds finished before a failure are still flushed.
    """
    ex = build_experiment(cfg)
    params = init_params(ex.spec)
    anchors = None
    reports: list[RoundReport] = []
    writer = None
    if out_dir is not None:
        from .reporting import RunWriter

        writer = RunWriter(out_dir)
    pool = None
    if len(ex.clients) > 1:
        pool = ThreadPoolExecutor(max_workers=workers or os.cpu_count() or 1)
    try:
        for t in range(cfg.run.rounds):
            params, report, anchors = run_round(ex, t, params, anchors, pool)
            reports.append(report)
            if writer is not None:
                writer.write_round(report.as_record())
                if cfg.run.checkpoint_every > 0 and (t + 1) % cfg.run.checkpoint_every == 0:
                    writer.save_model(f"model_round_{t:04d}.ckpt", params, ex.spec)
    finally:
        if pool is not None:
            pool.shutdown()
        if writer is not None:
            writer.finalize()
    if writer is not None:
        writer.save_model("model_final.ckpt", params, ex.spec)
    return reports, params, ex


def interpolate_models(theta1: np.ndarray, theta2: np.ndarray, w: float) -> np.ndarray:
    """w*theta1 + (1-w)*theta2; the endpoints return exact copies."""
    if theta1.shape != theta2.shape:
        raise ValueError(f"shape mismatch: {theta1.shape} vs {theta2.shape}")
    if w == 1.0:
        return theta1.copy()
    if w == 0.0:
        return theta2.copy()
    return w * theta1 + (1.0 - w) * theta2


def default_interpolation_grid(points: int = 29) -> np.ndarray:
    grid = np.linspace(-0.2, 1.2, points)
    # snap float noise so the sweep hits the two endpoint models exactly
    grid[np.abs(grid) < 1e-9] = 0.0
    grid[np.abs(grid - 1.0) < 1e-9] = 1.0
    return grid


def loss_sweep(
    theta1: np.ndarray,
    theta2: np.ndarray,
    spec: ModelSpec,
    data: Dataset | Batch,
    attack_cfg: AttackConfig | None = None,
    w_grid: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> list[dict]:
    """Natural (and adversarial) loss along the line between two weight vectors."""
    batch = data.batch() if isinstance(data, Dataset) else data
    if w_grid is None:
        w_grid = default_interpolation_grid()
    rows = []
    for w in np.asarray(w_grid, dtype=np.float64):
        theta = interpolate_models(theta1, theta2, float(w))
        row = {"w": float(w), "nat_loss": mean_loss(theta, spec, batch), "adv_loss": None}
        if attack_cfg is not None:
            adv = pgd_attack(theta, spec, batch, attack_cfg, rng=rng)
            row["adv_loss"] = mean_loss(theta, spec, adv)
        rows.append(row)
    return rows
