"""End-to-end optimization of the combined objective and the multi-seed protocol.

Training is two-phase: the pooling backend and classifier are pretrained on
the unpruned graphs, then the multi-view pruning layer is enabled and all
parameters train jointly. Graphs are processed one at a time with gradient
accumulation up to the batch size, which sidesteps padded batching of
variable-size graphs.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, TrainingDiverged
from .graphio import Dataset, FeatureScaler, Graph, SplitSpec, split
from .multiview import (ViewEncoder, ViewPartition, default_overlap_ratio,
                        encode_views_xa, make_partition)
from .pooling import ClassifierHead, PoolBackend, classify, make_backend
from .prune import ReconHead, build_indicator, node_scores, recon_losses, reconstruct
from .rng import substream


@dataclass
class TrainConfig:
    epochs: int = 200
    pretrain_epochs: int = 50
    learning_rate: float = 5e-4
    batch_size: int = 32
    seeds: tuple = tuple(range(10))
    lam: float = 0.5
    threshold_c: float = 2.0
    views: int = 8
    overlap_ratio: float | None = None  # None -> 0.25 iff a view would have < 4 features
    latent_width: int = 64
    backend: str = "mean"
    backend_hidden: int = 32
    keep_ratio: float = 0.75
    clusters: int | None = None         # None -> ceil(mean train graph size / 4)
    aux_loss_weight: float = 1.0
    classifier_hidden: int = 32
    use_mvp: bool = True
    use_recon_loss: bool = True
    use_pool_loss: bool = True
    standardize_features: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigError("learning_rate and batch_size must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lam must be in [0, 1], got {self.lam}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"unknown config key '{key}'")
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(int(s) for s in d["seeds"])
        return cls(**d)


def replace_config(config: TrainConfig, **changes) -> TrainConfig:
    return dataclasses.replace(config, **changes)


class Adam:
    """Adaptive-moment gradient descent over a list of parameter tensors."""

    def __init__(self, params: list[T.Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(p.shape) for p in params]
        self.v = [np.zeros(p.shape) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = b1 * self.m[i] + (1 - b1) * p.grad
            self.v[i] = b2 * self.v[i] + (1 - b2) * p.grad ** 2
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


@dataclass
class MvpModel:
    config: TrainConfig
    partition: ViewPartition
    encoder: ViewEncoder
    recon: ReconHead
    backend: PoolBackend
    classifier: ClassifierHead
    scaler: FeatureScaler
    num_classes: int

    def mvp_parameters(self) -> dict[str, T.Tensor]:
        out = {}
        for i, (w_e, w_g) in enumerate(zip(self.encoder.embed_weights,
                                           self.encoder.gcn_weights)):
            out[f"view{i}.embed"] = w_e
            out[f"view{i}.gcn"] = w_g
        out["recon.w"] = self.recon.weight
        out["recon.b"] = self.recon.bias
        return out

    def task_parameters(self) -> dict[str, T.Tensor]:
        out = {f"backend.{k}": v for k, v in self.backend.params.items()}
        out.update({"clf.w1": self.classifier.w1, "clf.b1": self.classifier.b1,
                    "clf.w2": self.classifier.w2, "clf.b2": self.classifier.b2})
        return out

    def named_parameters(self) -> dict[str, T.Tensor]:
        out = self.mvp_parameters() if self.config.use_mvp else {}
        out.update(self.task_parameters())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.values.copy() for k, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        for k, v in state.items():
            params[k].values = np.asarray(v, dtype=np.float64).copy()


def build_model(config: TrainConfig, dataset: Dataset, sp: SplitSpec, seed: int) -> MvpModel:
    rng = substream(seed, "init")
    k = config.views
    overlap = config.overlap_ratio
    if overlap is None:
        overlap = default_overlap_ratio(dataset.d, k)
    partition = make_partition(dataset.d, k, overlap, seed)
    encoder = ViewEncoder.init(partition, config.latent_width, rng)
    recon = ReconHead.init(encoder.latent_width, dataset.d, rng)
    clusters = config.clusters
    if clusters is None:
        mean_n = np.mean([dataset.graphs[i].n for i in sp.train])
        clusters = max(2, math.ceil(mean_n / 4))
    backend = make_backend(config.backend, dataset.d, rng, hidden=config.backend_hidden,
                           keep_ratio=config.keep_ratio, clusters=int(clusters),
                           aux_loss_weight=config.aux_loss_weight)
    classifier = ClassifierHead.init(backend.out_width, config.classifier_hidden,
                                     dataset.num_classes, rng)
    scaler = (FeatureScaler.fit(dataset, sp.train) if config.standardize_features
              else FeatureScaler.identity(dataset.d))
    return MvpModel(config, partition, encoder, recon, backend, classifier,
                    scaler, dataset.num_classes)


@dataclass
class ForwardResult:
    logits: T.Tensor
    la: T.Tensor | None
    lx: T.Tensor | None
    l_pool: T.Tensor | None
    scores: np.ndarray | None
    indicator: np.ndarray


def forward_graph(model: MvpModel, graph: Graph, use_mvp: bool | None = None,
                  threshold_c: float | None = None) -> ForwardResult:
    cfg = model.config
    if use_mvp is None:
        use_mvp = cfg.use_mvp
    c = cfg.threshold_c if threshold_c is None else threshold_c
    x_std = model.scaler.transform(graph.features)
    la = lx = scores = None
    if use_mvp:
        z = encode_views_xa(x_std, graph.adjacency, model.partition, model.encoder)
        a_hat, x_hat = reconstruct(z, model.recon)
        la, lx, _ = recon_losses(graph.adjacency, x_std, a_hat, x_hat)
        scores = node_scores(graph.adjacency, x_std, a_hat.values, x_hat.values, cfg.lam)
        indicator, _, _ = build_indicator(scores, c)
        # straight-through: the indicator enters the task path only as a constant
        x_in = T.Tensor(x_std * indicator[:, None])
        a_in = graph.adjacency * indicator[:, None] * indicator[None, :]
    else:
        indicator = np.ones(graph.n)
        x_in = T.Tensor(x_std)
        a_in = graph.adjacency
    h_g, l_pool = model.backend.forward(x_in, a_in, indicator)
    logits = classify(h_g, model.classifier)
    return ForwardResult(logits, la, lx, l_pool, scores, indicator)


def combined_loss(result: ForwardResult, label: int,
                  use_recon: bool = True, use_pool: bool = True):
    """Unweighted sum of the enabled terms; disabled terms contribute exactly 0."""
    loss = T.cross_entropy(result.logits, label)
    parts = {"ce": loss.item(), "la": 0.0, "lx": 0.0, "pool": 0.0}
    if use_recon and result.la is not None:
        loss = T.add(T.add(loss, result.la), result.lx)
        parts["la"] = result.la.item()
        parts["lx"] = result.lx.item()
    if use_pool and result.l_pool is not None:
        loss = T.add(loss, result.l_pool)
        parts["pool"] = result.l_pool.item()
    return loss, parts


def evaluate(model: MvpModel, dataset: Dataset, indices, use_mvp: bool | None = None) -> float:
    if not len(indices):
        return 0.0
    correct = 0
    for i in indices:
        res = forward_graph(model, dataset.graphs[i], use_mvp=use_mvp)
        correct += int(np.argmax(res.logits.values) == dataset.graphs[i].label)
    return correct / len(indices)


def _run_phase(model: MvpModel, dataset: Dataset, sp: SplitSpec, seed: int,
               epochs: int, use_mvp: bool, params: list[T.Tensor],
               trace: dict, select_best: bool):
    cfg = model.config
    opt = Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    order_rng = substream(seed, "batch")
    best = None  # (acc, epoch, state)
    for epoch in range(epochs):
        order = order_rng.permutation(sp.train)
        sums = {"ce": 0.0, "la": 0.0, "lx": 0.0, "pool": 0.0}
        opt.zero_grad()
        pending = 0
        for gi in order:
            graph = dataset.graphs[gi]
            res = forward_graph(model, graph, use_mvp=use_mvp)
            loss, parts = combined_loss(res, graph.label,
                                        cfg.use_recon_loss, cfg.use_pool_loss)
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(
                    f"non-finite loss at seed {seed}, epoch {epoch}, graph {gi}: {parts}")
            T.backward(loss)
            for key in sums:
                sums[key] += parts[key]
            pending += 1
            if pending >= cfg.batch_size:
                opt.step()
                opt.zero_grad()
                pending = 0
        if pending:
            opt.step()
            opt.zero_grad()
        n_train = len(sp.train)
        for key in sums:
            trace[f"{'joint' if use_mvp or not cfg.use_mvp else 'pretrain'}_{key}"].append(
                sums[key] / n_train)
        trace["total_loss"].append(sum(sums.values()) / n_train)
        if select_best:
            acc = evaluate(model, dataset, sp.val, use_mvp=use_mvp)
            trace["val_accuracy"].append(acc)
            if best is None or acc > best[0]:  # ties keep the earlier epoch
                best = (acc, epoch, model.state_dict())
    if select_best and best is not None:
        model.load_state_dict(best[2])
        trace["best_epoch"] = best[1]
        trace["best_val_accuracy"] = best[0]


def train_one(config: TrainConfig, dataset: Dataset, sp: SplitSpec, seed: int):
    """Train a single model: optional pretraining of backend + classifier,
    then joint training. Returns the model (best-validation weights restored)
    and the per-epoch trace."""
    model = build_model(config, dataset, sp, seed)
    trace: dict = {key: [] for key in
                   ("pretrain_ce", "pretrain_la", "pretrain_lx", "pretrain_pool",
                    "joint_ce", "joint_la", "joint_lx", "joint_pool",
                    "total_loss", "val_accuracy")}
    if config.use_mvp and config.pretrain_epochs > 0:
        _run_phase(model, dataset, sp, seed, config.pretrain_epochs, use_mvp=False,
                   params=list(model.task_parameters().values()),
                   trace=trace, select_best=False)
    _run_phase(model, dataset, sp, seed, config.epochs, use_mvp=config.use_mvp,
               params=list(model.named_parameters().values()),
               trace=trace, select_best=True)
    return model, trace


def split_for_seed(dataset: Dataset, seed: int) -> SplitSpec:
    return split(dataset, seed)


def pruning_stats(model: MvpModel, dataset: Dataset, indices) -> dict:
    """Fraction of nodes pruned and the degree histogram of pruned nodes."""
    total = pruned = 0
    hist: dict[int, int] = {}
    for i in indices:
        graph = dataset.graphs[i]
        res = forward_graph(model, graph)
        total += graph.n
        deg = graph.degrees.astype(int)
        for node in np.nonzero(res.indicator == 0)[0]:
            pruned += 1
            hist[int(deg[node])] = hist.get(int(deg[node]), 0) + 1
    return {"fraction_pruned": pruned / total if total else 0.0,
            "pruned_degree_histogram": {str(k): v for k, v in sorted(hist.items())}}


@dataclass
class TrialReport:
    config: dict
    seeds: list[int]
    accuracies: list[float]
    failures: list[dict] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)
    prune_stats: list[dict] = field(default_factory=list)
    partitions: list[dict] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def std_accuracy(self) -> float:
        # population std over seeds: a single trial reports 0
        return float(np.std(self.accuracies)) if self.accuracies else float("nan")

    @property
    def mean_pruned_fraction(self) -> float:
        fracs = [s["fraction_pruned"] for s in self.prune_stats]
        return float(np.mean(fracs)) if fracs else 0.0

    def to_dict(self) -> dict:
        return {"config": self.config, "seeds": self.seeds,
                "accuracies": self.accuracies,
                "mean_accuracy": self.mean_accuracy, "std_accuracy": self.std_accuracy,
                "failures": self.failures, "prune_stats": self.prune_stats,
                "partitions": self.partitions, "traces": self.traces}

    def metrics_rows(self) -> list[dict]:
        return [{"seed": s, "accuracy": "%.17g" % a,
                 "pruned_fraction": "%.17g" % ps.get("fraction_pruned", 0.0)}
                for s, a, ps in zip(self.seeds, self.accuracies,
                                    self.prune_stats or [{}] * len(self.seeds))]


def _trial(config: TrainConfig, dataset: Dataset, seed: int) -> dict:
    sp = split(dataset, seed)
    try:
        model, trace = train_one(config, dataset, sp, seed)
    except TrainingDiverged as exc:
        return {"seed": seed, "ok": False, "error": str(exc)}
    stats = (pruning_stats(model, dataset, sp.test) if config.use_mvp
             else {"fraction_pruned": 0.0, "pruned_degree_histogram": {}})
    return {"seed": seed, "ok": True,
            "accuracy": evaluate(model, dataset, sp.test),
            "trace": trace, "partition": model.partition.to_dict(),
            "prune_stats": stats, "state": model.state_dict()}


def run_trials(config: TrainConfig, dataset: Dataset,
               return_models: bool = False, jobs: int = 1):
    """One split + one training per seed; aggregates accuracy mean and std.

    Seeds run independently (in `jobs` processes when > 1) and are always
    aggregated in seed order. Per-trial divergences are recorded and the
    report carries partial results.
    """
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_trial, config, dataset, seed) for seed in config.seeds]
            results = [f.result() for f in futures]
    else:
        results = [_trial(config, dataset, seed) for seed in config.seeds]

    report = TrialReport(config.to_dict(), [], [])
    models = []
    for res in results:
        if not res["ok"]:
            report.failures.append({"seed": res["seed"], "error": res["error"]})
            continue
        report.seeds.append(res["seed"])
        report.accuracies.append(res["accuracy"])
        report.traces.append(res["trace"])
        report.partitions.append(res["partition"])
        report.prune_stats.append(res["prune_stats"])
        if return_models:
            model = build_model(config, dataset, split(dataset, res["seed"]), res["seed"])
            model.load_state_dict(res["state"])
            models.append(model)
    if return_models:
        return report, models
    return report


def save_report(report: TrialReport, path: str):
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
