"""鲁棒分布式 SGD 协议：本地动量、截断量化、（同态）截尾聚合、子采样与模型更新

随机数由 SeedSequence(seed).spawn 按固定顺序派生：
数据生成、训练/测试划分、节点划分、服务器子采样、攻击者，然后每个节点一个。
"""
import csv
import os
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config.config import ExperimentConfig
from hagg import oracles
from hagg.aggregators import AggregatorRegistry
from hagg.attacks import AttackSpec, ByzantineAdversary, labelflip
from hagg.datasim import Dataset, Shard, dirichlet_split, load_idx, synth_dataset, train_test_split
from hagg.encoding import EncodingParams, PackedBatch, ParamSpec, check_digits, pack, param_search, unpack
from hagg.errors import InvariantViolation, ParameterError
from hagg.homcircuit import CostReport, hts_batch
from hagg.model import ModelParams, accuracy, gradient, init_params
from utils.logger import get_logger

logger = get_logger(__name__)

AGG_MODES = ("oracle", "homomorphic")
CSV_HEADER = ("step", "train_acc", "test_acc", "attack", "aggregator", "f", "n", "seed")

StepCallback = Callable[[int, np.ndarray, np.ndarray, np.ndarray], None]


def quantization_bound(delta: int) -> int:
    return 2 ** (delta - 1) - 1


def quantization_scale(delta: int, clamp: float) -> float:
    """Q = (2^(δ-1) - 1) / C"""
    return quantization_bound(delta) / clamp


def round_half_away(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return np.sign(arr) * np.floor(np.abs(arr) + 0.5)


@dataclass(frozen=True, eq=False)
class QuantizedVector:
    values: np.ndarray
    delta: int
    clamp: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        bound = quantization_bound(self.delta)
        if values.size and np.abs(values).max() > bound:
            raise InvariantViolation(f"量化值超出 [-{bound}, {bound}]")
        object.__setattr__(self, "values", values)

    @property
    def scale(self) -> float:
        return quantization_scale(self.delta, self.clamp)


def qua(m, delta: int, clamp: float) -> QuantizedVector:
    """截断到 [-C, C]，乘以 Q 后四舍五入（远离零）"""
    if delta <= 1 or clamp <= 0:
        raise ParameterError(f"需要 delta > 1 且 clamp > 0，收到 delta={delta}, clamp={clamp}")
    bound = quantization_bound(delta)
    scaled = np.clip(np.asarray(m, dtype=np.float64), -clamp, clamp) * quantization_scale(delta, clamp)
    values = np.clip(round_half_away(scaled), -bound, bound).astype(np.int64)
    return QuantizedVector(values, delta, clamp)


def dequantize(values, delta: int, clamp: float) -> np.ndarray:
    """量化域的值（可以是窗口平均）除以 Q 回到实数域"""
    return np.asarray(values, dtype=np.float64) / quantization_scale(delta, clamp)


def subsample(n: int, f: int, rng: np.random.Generator) -> np.ndarray:
    """无放回地均匀选出 2f+1 个节点，返回升序下标"""
    size = 2 * f + 1
    if size > n:
        raise ParameterError(f"2f+1={size} 超过节点数 n={n}")
    return np.sort(rng.choice(n, size=size, replace=False))


def server_aggregate(batches: Sequence[PackedBatch], f: int, mode: str,
                     threads: int = 1) -> Tuple[np.ndarray, Optional[CostReport]]:
    """服务器聚合：返回去掉 offset 后的截尾和，同态模式下同时返回电路代价"""
    if not batches:
        raise ParameterError("没有可聚合的输入")
    if mode not in AGG_MODES:
        raise ParameterError(f"未知的聚合模式 {mode!r}，可选 {AGG_MODES}")
    k = len(batches)
    if f < 0 or 2 * f >= k:
        raise ParameterError(f"{k} 个输入无法每侧截去 {f} 个")
    enc = batches[0].enc
    for batch in batches:
        if batch.enc != enc or batch.D != batches[0].D:
            raise ParameterError("所有输入需要相同的编码参数与维度")
        check_digits(batch)
    if k - 2 * f > enc.sum_width:
        raise ParameterError(f"窗口宽度 {k - 2 * f} 超过 sum_width={enc.sum_width}，系数求和会回绕")
    if enc.ring.p < k:
        raise ParameterError(f"p={enc.ring.p} 小于输入个数 {k}")

    if mode == "homomorphic":
        result, cost = hts_batch(batches, f, enc, threads)
        return unpack(result, offsets=k - 2 * f), cost
    decoded = np.stack([unpack(batch) for batch in batches])
    return oracles.cwts(decoded, f), None


def local_update(theta: np.ndarray, aggregate: np.ndarray, n_selected: int, f: int, gamma: float,
                 delta: Optional[int] = None, clamp: Optional[float] = None) -> np.ndarray:
    """θ - γ * (aggregate / (|S| - 2f)) / Q；delta 为 None 时不做反量化"""
    window = n_selected - 2 * f
    if window < 1:
        raise ParameterError(f"|S|={n_selected} 必须大于 2f={2 * f}")
    step = np.asarray(aggregate, dtype=np.float64) / window
    if delta is not None:
        step = dequantize(step, delta, clamp)
    return theta - gamma * step


@dataclass
class NodeState:
    node_id: int
    shard: Shard
    theta: np.ndarray
    momentum: np.ndarray
    honest: bool
    rng: np.random.Generator
    flip_labels: bool = False

    def sample_batch(self, dataset: Dataset, batch: int) -> Tuple[np.ndarray, np.ndarray]:
        """从本地分片有放回地均匀抽样"""
        picks = self.shard.indices[self.rng.integers(0, self.shard.size, size=batch)]
        labels = dataset.labels[picks]
        if self.flip_labels:
            labels = labelflip(labels, dataset.n_classes)
        return dataset.features[picks], labels

    def step_momentum(self, dataset: Dataset, model: ModelParams, batch: int,
                      beta: float, l2: float) -> np.ndarray:
        """m_t = β m_{t-1} + (1 - β) g_t"""
        features, labels = self.sample_batch(dataset, batch)
        grad = gradient(self.theta, features, labels, model, l2)
        self.momentum = beta * self.momentum + (1.0 - beta) * grad
        return self.momentum


@dataclass(frozen=True)
class MetricRow:
    step: int
    train_acc: float
    test_acc: float
    attack: str
    aggregator: str
    f: int
    n: int
    seed: int

    def to_csv_row(self) -> List[str]:
        return [str(self.step), f"{self.train_acc:.6f}", f"{self.test_acc:.6f}",
                self.attack, self.aggregator, str(self.f), str(self.n), str(self.seed)]


class TrainingSession:
    """组装数据、节点、攻击者与服务器，逐步执行训练"""

    def __init__(self, config: ExperimentConfig):
        self.config = config.validate()
        cfg = self.config
        seeds = np.random.SeedSequence(cfg.seed).spawn(5 + cfg.n)
        data_seed, split_seed, partition_seed, server_seed, attacker_seed = seeds[:5]

        self.train_set, self.test_set = self._build_datasets(data_seed, split_seed)
        self.model = ModelParams(self.train_set.n_features, self.train_set.n_classes)
        shards = dirichlet_split(self.train_set, cfg.n, cfg.alpha, partition_seed)

        self.nodes: List[NodeState] = []
        for i in range(cfg.n):
            honest = i < cfg.n - cfg.f
            self.nodes.append(NodeState(
                node_id=i,
                shard=shards[i],
                theta=init_params(self.model),
                momentum=np.zeros(self.model.dimension),
                honest=honest,
                rng=np.random.default_rng(seeds[5 + i]),
                flip_labels=not honest and cfg.attack == "LF",
            ))

        self.registry = AggregatorRegistry()
        self.trim = self.registry.trim_count(cfg.aggregator, cfg.n_selected, cfg.f)
        self.window = cfg.n_selected - 2 * self.trim
        self.enc: Optional[EncodingParams] = self._resolve_encoding() if cfg.quantize else None
        self.server_rng = np.random.default_rng(server_seed)

        self.adversary = ByzantineAdversary(
            AttackSpec(cfg.attack, cfg.tau_grid),
            n=cfg.n,
            f=cfg.f,
            aggregator=self._attack_target,
            postprocess=self._attack_postprocess(),
            rng=np.random.default_rng(attacker_seed),
        )
        self.cost: Optional[CostReport] = None
        self.step_count = 0
        logger.info(
            f"训练会话就绪: n={cfg.n}, f={cfg.f}, 维度={self.model.dimension}, "
            f"聚合器={cfg.aggregator_label}, 攻击={cfg.attack}, 模式={cfg.agg_mode}"
        )

    def _build_datasets(self, data_seed, split_seed) -> Tuple[Dataset, Dataset]:
        ds = self.config.dataset
        if ds.kind == "idx":
            return (load_idx(ds.train_images, ds.train_labels, ds.classes),
                    load_idx(ds.test_images, ds.test_labels, ds.classes))
        full = synth_dataset(data_seed, ds.classes, ds.features, ds.size, ds.separation, ds.feature_scale)
        return train_test_split(full, ds.test_fraction, split_seed)

    def _resolve_encoding(self) -> EncodingParams:
        cfg = self.config
        spec = ParamSpec(
            n=cfg.n_selected,
            f=self.trim,
            N=cfg.encoding.N,
            min_d=cfg.encoding.min_d,
            delta=cfg.delta,
            B=cfg.encoding.B,
            sum_width=self.window,
            max_m=cfg.encoding.max_m,
            max_p=cfg.encoding.max_p,
        )
        return param_search(spec)

    def _attack_target(self, x: np.ndarray) -> np.ndarray:
        """攻击者优化时面对的明文聚合器，作用于全部 n 个输入"""
        if self.config.aggregator == "cwmed":
            return oracles.cwmed(x)
        return self.registry.aggregate(self.config.aggregator, x, self.config.f)

    def _attack_postprocess(self):
        cfg = self.config
        if not cfg.quantize or cfg.attack_domain == "raw":
            return None
        bound = quantization_bound(cfg.delta)
        return lambda v: np.clip(round_half_away(v), -bound, bound).astype(np.int64)

    def _to_wire(self, momentum: np.ndarray) -> np.ndarray:
        cfg = self.config
        if cfg.quantize:
            return qua(momentum, cfg.delta, cfg.clamp).values
        return momentum.copy()

    def step(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """执行一轮，返回 (S, 全部节点的线上向量, 聚合结果)"""
        cfg = self.config
        crafted = self.adversary.crafts_vectors and cfg.f > 0
        dtype = np.int64 if cfg.quantize else np.float64
        wire = np.zeros((cfg.n, self.model.dimension), dtype=dtype)
        raw_honest = []

        for node in self.nodes:
            if not node.honest and crafted:
                continue
            momentum = node.step_momentum(self.train_set, self.model, cfg.batch, cfg.beta, cfg.l2)
            if node.honest:
                raw_honest.append(momentum.copy())
            wire[node.node_id] = self._to_wire(momentum)

        honest_count = cfg.n - cfg.f
        if crafted:
            if cfg.quantize and cfg.attack_domain == "raw":
                vectors = self.adversary.craft(np.vstack(raw_honest))
                vectors = np.vstack([self._to_wire(v) for v in vectors])
            else:
                vectors = self.adversary.craft(wire[:honest_count])
            wire[honest_count:] = vectors

        selected = subsample(cfg.n, cfg.f, self.server_rng) if cfg.subsample else np.arange(cfg.n)
        aggregate = self._aggregate(wire, selected)

        delta = cfg.delta if cfg.quantize else None
        for node in self.nodes:
            node.theta = local_update(node.theta, aggregate, selected.size, self.trim,
                                      cfg.gamma, delta, cfg.clamp)
        self._check_consistency()
        self.step_count += 1
        return selected, wire, aggregate

    def _aggregate(self, wire: np.ndarray, selected: np.ndarray) -> np.ndarray:
        cfg = self.config
        if not cfg.quantize:
            return oracles.cwts(wire[selected], self.trim)
        batches = [pack(wire[i], self.enc) for i in selected]
        aggregate, cost = server_aggregate(batches, self.trim, cfg.agg_mode, cfg.threads)
        if cost is not None:
            self.cost = cost if self.cost is None else self.cost.merge(cost)
        return aggregate

    def _check_consistency(self):
        reference = self.nodes[0].theta
        for node in self.nodes:
            if node.honest and not np.array_equal(node.theta, reference):
                raise InvariantViolation(f"诚实节点 {node.node_id} 的模型与节点 0 不一致")

    def evaluate(self, step: int) -> MetricRow:
        cfg = self.config
        theta = self.nodes[0].theta
        row = MetricRow(
            step=step,
            train_acc=accuracy(theta, self.train_set.features, self.train_set.labels, self.model),
            test_acc=accuracy(theta, self.test_set.features, self.test_set.labels, self.model),
            attack=cfg.attack,
            aggregator=cfg.aggregator_label,
            f=cfg.f,
            n=cfg.n,
            seed=cfg.seed,
        )
        logger.info(f"第 {step} 步: 训练准确率={row.train_acc:.4f}, 测试准确率={row.test_acc:.4f}")
        return row

    def run(self, on_step: Optional[StepCallback] = None) -> List[MetricRow]:
        cfg = self.config
        rows = []
        for t in range(1, cfg.T + 1):
            selected, wire, aggregate = self.step()
            if on_step is not None:
                on_step(t, selected, wire, aggregate)
            if t % cfg.eval_every == 0 or t == cfg.T:
                rows.append(self.evaluate(t))
        if self.cost is not None:
            logger.debug(f"同态聚合累计: 深度={self.cost.depth}, 密文乘法={self.cost.ct_ct_mults}")
        return rows


def run_training(config: ExperimentConfig, on_step: Optional[StepCallback] = None) -> List[MetricRow]:
    return TrainingSession(config).run(on_step)


def write_metrics_csv(rows: Sequence[MetricRow], path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.to_csv_row())
    logger.info(f"指标已写入 {path}")
