"""Pretrain / insert / inference-epoch protocol, Adam, and the experiment grid."""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .data import DatasetBundle, Split, build_setting_a, build_setting_b, load_bundle
from .graph import Graph, induced_training_graph, insert_nodes_edges
from .models import MODEL_KINDS, GraphInputs, ModelConfig, forward, init_params
from .rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

__all__ = [
    "DATASETS",
    "SETTINGS",
    "PRETRAIN_OPTIONS",
    "TrainingDivergedError",
    "ExperimentConfig",
    "AdamState",
    "RunRecord",
    "PreparedDataset",
    "adam_step",
    "train_epoch",
    "evaluate",
    "prepare_dataset",
    "run_single",
    "enumerate_grid",
    "run_grid",
    "read_records",
]

DATASETS = ("cora", "citeseer", "pubmed")
SETTINGS = ("A", "B")
PRETRAIN_OPTIONS = (0, 200)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    dataset: str
    setting: str
    pretrain_epochs: int = 200
    inference_epochs: int = 50
    repetitions: int = 100
    base_seed: int = 0

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be A or B, got {self.setting!r}")
        if self.pretrain_epochs < 0 or self.inference_epochs < 0 or self.repetitions < 1:
            raise ValueError("epoch counts must be non-negative and repetitions positive")

    @property
    def config_id(self) -> str:
        return f"{self.model}-{self.dataset}-{self.setting}-pre{self.pretrain_epochs}"

    def model_config(self) -> ModelConfig:
        return ModelConfig.default(self.model, self.dataset)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam with L2 decay folded into the gradient.  Updates in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ad.ShapeError(f"adam_step: gradient {g.shape} does not match parameter {name} {p.shape}")
        if weight_decay:
            g = g + weight_decay * p
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def _loss(config: ModelConfig, params, graph, features, labels, mask, training, rng):
    tape = ad.Tape()
    tparams = {k: tape.param(v, k) for k, v in params.items()}
    logits = forward(config, tparams, graph, tape.constant(features), training, rng)
    loss = ad.masked_nll(ad.log_softmax_rows(logits), labels, mask)
    return tape, loss


def train_epoch(config: ModelConfig, params: dict[str, np.ndarray], graph: Optional[GraphInputs],
                features: np.ndarray, labels: np.ndarray, train_mask, state: AdamState,
                rng: np.random.Generator) -> float:
    """One full-batch forward/backward/Adam step; returns the loss before the step."""
    tape, loss = _loss(config, params, graph, features, labels, train_mask, True, rng)
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingDivergedError(f"non-finite loss {value} at optimizer step {state.step + 1}")
    adam_step(params, ad.backward(tape, loss), state, config.lr, config.weight_decay)
    return value


def predict(config: ModelConfig, params, graph, features) -> np.ndarray:
    tape = ad.Tape()
    tparams = {k: tape.constant(v, k) for k, v in params.items()}
    return forward(config, tparams, graph, tape.constant(features), training=False).value


def evaluate(config: ModelConfig, params, graph, features, labels, test_mask) -> float:
    """Test accuracy in eval mode; argmax ties go to the lowest class index."""
    test_mask = np.asarray(test_mask, dtype=np.int64)
    if test_mask.size == 0:
        raise ValueError("evaluate: test mask is empty")
    pred = predict(config, params, graph, features)[test_mask].argmax(axis=1)
    return float(np.mean(pred == np.asarray(labels)[test_mask]))


@dataclass
class RunRecord:
    config_id: str
    model: str
    dataset: str
    setting: str
    pretrain_epochs: int
    repetition: int
    seed: int
    accuracies: list[float]
    wall_ms: Optional[float] = None
    pretrain_loss: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "config_id": self.config_id, "model": self.model, "dataset": self.dataset,
            "setting": self.setting, "pretrain_epochs": self.pretrain_epochs,
            "repetition": self.repetition, "seed": self.seed, "accuracies": self.accuracies,
            "wall_ms": self.wall_ms, "pretrain_loss": self.pretrain_loss,
        })

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(d["config_id"], d["model"], d["dataset"], d["setting"], int(d["pretrain_epochs"]),
                   int(d["repetition"]), int(d["seed"]), [float(a) for a in d["accuracies"]],
                   d.get("wall_ms"), [float(x) for x in d.get("pretrain_loss", [])])


def read_records(paths) -> list[RunRecord]:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    out = []
    for path in paths:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    out.append(RunRecord.from_dict(json.loads(line)))
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from None
    return out


@dataclass(frozen=True, eq=False)
class PreparedDataset:
    """Everything a run needs that does not depend on the repetition."""

    bundle: DatasetBundle
    graph: Graph
    split: Split

    @classmethod
    def from_bundle(cls, bundle: DatasetBundle, setting: str, split_seed: int) -> "PreparedDataset":
        split = build_setting_a(bundle, split_seed)
        if setting == "B":
            split = build_setting_b(split)
        return cls(bundle, bundle.graph(), split)


@lru_cache(maxsize=4)
def _load_cached(path: str) -> DatasetBundle:
    return load_bundle(path)


def prepare_dataset(data_dir, dataset: str, setting: str, split_seed: int) -> PreparedDataset:
    bundle = _load_cached(str(Path(data_dir) / dataset))
    return PreparedDataset.from_bundle(bundle, setting, split_seed)


def run_single(config: ExperimentConfig, repetition: int, seed: int, data: PreparedDataset,
               timing: bool = False) -> RunRecord:
    """One repetition of the protocol.

    Phase 1 trains on the induced training subgraph, seeing only training
    nodes' features.  Phase 2 inserts the unseen nodes and edges, restarts
    Adam, and records test accuracy before the first and after each
    inference epoch.  Labels are only ever those of training nodes.
    """
    start = time.perf_counter()
    bundle, split = data.bundle, data.split
    mcfg = config.model_config()
    params = init_params(mcfg, bundle.num_features, bundle.num_classes, make_rng(seed, "init"))
    drop_rng = make_rng(seed, "dropout")
    labels = bundle.labels

    pretrain_loss = []
    try:
        if config.pretrain_epochs:
            g_train, remap = induced_training_graph(data.graph, split.train)
            inputs = GraphInputs(g_train)
            feats = bundle.features[split.train]
            local_labels = labels[split.train]
            mask = np.arange(split.train.size)
            state = AdamState.fresh(params)
            for _ in range(config.pretrain_epochs):
                pretrain_loss.append(train_epoch(mcfg, params, inputs, feats, local_labels, mask,
                                                 state, drop_rng))
            full = GraphInputs(insert_nodes_edges(g_train, data.graph, remap))
        else:
            full = GraphInputs(data.graph)

        state = AdamState.fresh(params)
        accuracies = [evaluate(mcfg, params, full, bundle.features, labels, split.test)]
        for _ in range(config.inference_epochs):
            train_epoch(mcfg, params, full, bundle.features, labels, split.train, state, drop_rng)
            accuracies.append(evaluate(mcfg, params, full, bundle.features, labels, split.test))
    except TrainingDivergedError as exc:
        raise TrainingDivergedError(f"{config.config_id} repetition {repetition} seed {seed}: {exc}") from exc

    wall = round((time.perf_counter() - start) * 1000.0, 3) if timing else None
    return RunRecord(config.config_id, config.model, config.dataset, config.setting,
                     config.pretrain_epochs, repetition, seed, accuracies, wall, pretrain_loss)


def enumerate_grid(datasets: Sequence[str] = DATASETS, settings: Sequence[str] = SETTINGS,
                   models: Sequence[str] = MODEL_KINDS, pretrain_options: Sequence[int] = PRETRAIN_OPTIONS,
                   inference_epochs: int = 50, repetitions: int = 100,
                   base_seed: int = 0) -> list[ExperimentConfig]:
    return [ExperimentConfig(m, d, s, p, inference_epochs, repetitions, base_seed)
            for d, s, m, p in product(datasets, settings, models, pretrain_options)]


def run_seed(config: ExperimentConfig, repetition: int) -> int:
    return derive_seed(config.base_seed, config.config_id, repetition)


def split_seed(config: ExperimentConfig, repetition: int, reseed_splits: bool = False) -> int:
    if reseed_splits:
        return derive_seed(config.base_seed, "split", config.dataset, repetition)
    return derive_seed(config.base_seed, "split", config.dataset)


def _job(args) -> tuple[Optional[str], Optional[str]]:
    config, rep, data_dir, reseed, timing = args
    seed = run_seed(config, rep)
    try:
        data = prepare_dataset(data_dir, config.dataset, config.setting, split_seed(config, rep, reseed))
        return run_single(config, rep, seed, data, timing=timing).to_json(), None
    except Exception as exc:  # a failed repetition must not stop the grid
        return None, f"{config.config_id} repetition {rep} seed {seed}: {type(exc).__name__}: {exc}"


def iter_runs(configs: Iterable[ExperimentConfig], data_dir, workers: int = 1,
              reseed_splits: bool = False, timing: bool = False) -> Iterator[tuple[Optional[str], Optional[str]]]:
    """Yield (record line, error) per job in enumeration order, whatever the worker count."""
    jobs = [(c, r, str(data_dir), reseed_splits, timing) for c in configs for r in range(c.repetitions)]
    if workers <= 1:
        yield from map(_job, jobs)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_job, jobs, chunksize=1)


def run_grid(configs: Sequence[ExperimentConfig], data_dir, out_path, workers: int = 1,
             reseed_splits: bool = False, timing: bool = False) -> tuple[int, int]:
    """Append every completed record to ``out_path``; returns (written, failed)."""
    written = failed = 0
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "a") as fh:
        for line, err in iter_runs(configs, data_dir, workers, reseed_splits, timing):
            if err is not None:
                failed += 1
                logger.error("run failed: %s", err)
                continue
            fh.write(line + "\n")
            fh.flush()
            written += 1
    return written, failed
