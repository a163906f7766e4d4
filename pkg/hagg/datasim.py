"""数据集生成、IDX 读取与 Dirichlet 异构划分"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from hagg.errors import (
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    ParameterError,
)
from utils.logger import get_logger

logger = get_logger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1 or features.shape[0] != labels.shape[0]:
            raise ParameterError(f"特征 {features.shape} 与标签 {labels.shape} 形状不匹配")
        if not np.all(np.isfinite(features)):
            raise ParameterError("特征中含有非有限值")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ParameterError(f"标签超出 [0, {self.n_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)


@dataclass(frozen=True, eq=False)
class Shard:
    """某个节点在父数据集中的样本下标"""
    indices: np.ndarray
    node: int = 0

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])


def synth_dataset(seed, n_classes: int, n_features: int, size: int,
                  separation: float = 4.0, feature_scale: float = 1.0) -> Dataset:
    """高斯类簇：类内方差为 1，类中心的范数为 separation，最后整体乘以 feature_scale

    特征维数不少于类别数时类中心两两正交。seed 可以是整数或 SeedSequence。
    """
    if n_classes < 2:
        raise ParameterError(f"类别数 {n_classes} 至少为 2")
    if size < n_classes:
        raise ParameterError(f"样本数 {size} 少于类别数 {n_classes}")
    if n_features < 1:
        raise ParameterError(f"特征维数 {n_features} 必须为正")
    if feature_scale <= 0:
        raise ParameterError(f"feature_scale={feature_scale} 必须为正")

    rng = np.random.default_rng(seed)
    if n_features >= n_classes:
        q, _ = np.linalg.qr(rng.standard_normal((n_features, n_classes)))
        directions = q.T
    else:
        raw = rng.standard_normal((n_classes, n_features))
        directions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    centers = separation * directions

    labels = rng.permutation(np.arange(size) % n_classes)
    features = (centers[labels] + rng.standard_normal((size, n_features))) * feature_scale
    return Dataset(features, labels, n_classes)


def train_test_split(dataset: Dataset, test_fraction: float, seed) -> Tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError(f"测试集比例 {test_fraction} 需在 (0, 1) 内")
    n_test = int(round(dataset.size * test_fraction))
    if n_test < 1 or n_test >= dataset.size:
        raise ParameterError(f"样本数 {dataset.size} 不足以按比例 {test_fraction} 划分")
    order = np.random.default_rng(seed).permutation(dataset.size)
    return dataset.subset(np.sort(order[n_test:])), dataset.subset(np.sort(order[:n_test]))


def _read_header(buf: bytes, magic: int, n_dims: int, path: str) -> Tuple[int, ...]:
    header_size = 4 * (1 + n_dims)
    if len(buf) < header_size:
        raise IdxTruncatedError(f"{path} 头部不完整", offset=len(buf))
    found = int(np.frombuffer(buf, dtype=">u4", count=1, offset=0)[0])
    if found != magic:
        raise IdxMagicError(f"{path} 魔数为 {found:#010x}，期望 {magic:#010x}", offset=0)
    return tuple(int(x) for x in np.frombuffer(buf, dtype=">u4", count=n_dims, offset=4))


def _read_payload(buf: bytes, header_size: int, count: int, path: str) -> np.ndarray:
    if len(buf) < header_size + count:
        raise IdxTruncatedError(f"{path} 数据不完整，需要 {count} 字节", offset=len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=header_size)


def load_idx(images_path: str, labels_path: str, n_classes: int = 10) -> Dataset:
    """读取大端 IDX 格式的图像与标签，像素缩放到 [0, 1]"""
    with open(images_path, "rb") as f:
        image_buf = f.read()
    with open(labels_path, "rb") as f:
        label_buf = f.read()

    n_images, rows, cols = _read_header(image_buf, IDX_IMAGES_MAGIC, 3, images_path)
    pixels = _read_payload(image_buf, 16, n_images * rows * cols, images_path)
    (n_labels,) = _read_header(label_buf, IDX_LABELS_MAGIC, 1, labels_path)
    labels = _read_payload(label_buf, 8, n_labels, labels_path)

    if n_images != n_labels:
        raise IdxCountMismatchError(
            f"图像 {n_images} 张，标签 {n_labels} 个", offset=4
        )
    features = pixels.reshape(n_images, rows * cols).astype(np.float64) / 255.0
    logger.info(f"读取 IDX 数据: {n_images} 个样本, {rows}x{cols} 像素")
    return Dataset(features, labels.astype(np.int64), n_classes)


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    remainder = total - int(counts.sum())
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def _rebalance(buckets: List[List[int]], min_size: int):
    """把样本从最大的分片移到最小的分片，直到每个分片至少有 min_size 个样本"""
    moved = 0
    while True:
        sizes = [len(b) for b in buckets]
        smallest = int(np.argmin(sizes))
        if sizes[smallest] >= min_size:
            break
        largest = int(np.argmax(sizes))
        if sizes[largest] <= min_size:
            raise ParameterError(f"样本不足，无法让每个节点至少有 {min_size} 个样本")
        buckets[smallest].append(buckets[largest].pop())
        moved += 1
    if moved:
        logger.warning(f"分片过小，从最大分片移动了 {moved} 个样本")


def dirichlet_split(dataset: Dataset, n_nodes: int, alpha: float, seed,
                    min_size: int = 1) -> List[Shard]:
    """逐类抽取 Dirichlet(α) 比例，把该类样本按比例分给各节点"""
    if dataset.size == 0:
        raise ParameterError("数据集为空")
    if alpha <= 0:
        raise ParameterError(f"α={alpha} 必须为正")
    if n_nodes < 1:
        raise ParameterError(f"节点数 {n_nodes} 必须为正")
    if n_nodes * min_size > dataset.size:
        raise ParameterError(f"{dataset.size} 个样本不够分给 {n_nodes} 个节点")

    rng = np.random.default_rng(seed)
    buckets: List[List[int]] = [[] for _ in range(n_nodes)]
    for k in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == k)
        rng.shuffle(idx)
        proportions = rng.dirichlet(np.full(n_nodes, alpha))
        while np.any(np.isnan(proportions)):
            proportions = rng.dirichlet(np.full(n_nodes, alpha))
        counts = _largest_remainder(proportions, idx.size)
        for node, part in enumerate(np.split(idx, np.cumsum(counts)[:-1])):
            buckets[node].extend(part.tolist())

    _rebalance(buckets, min_size)
    return [Shard(np.array(sorted(b), dtype=np.int64), node) for node, b in enumerate(buckets)]


def class_histogram(dataset: Dataset, shard: Shard) -> np.ndarray:
    return np.bincount(dataset.labels[shard.indices], minlength=dataset.n_classes)
