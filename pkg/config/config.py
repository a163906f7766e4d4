import os
from dataclasses import dataclass, fields
from typing import Any, Callable, Dict, List, Optional, Tuple

from hagg.attacks import ATTACK_KINDS, DEFAULT_TAU_GRID
from hagg.errors import ConfigError
from utils.parsers import ConfigParser, parse_bool, parse_tau_grid

DEFAULT_OUTPUT_DIR = os.getenv("HAGG_OUTPUT_DIR", "./runs")

AGG_MODES = ("oracle", "homomorphic")
AGGREGATORS = ("cwtm", "cwmed", "mean")
ATTACK_DOMAINS = ("quantized", "raw")
DATASET_KINDS = ("synthetic", "idx")
DEFAULT_CLASSES = {"synthetic": 4, "idx": 10}

REQUIRED_KEYS = ("n", "f", "delta", "clamp", "gamma", "beta", "T")


@dataclass
class DatasetConfig:
    kind: str = "synthetic"
    classes: Optional[int] = None
    features: int = 8
    size: int = 2000
    separation: float = 4.0
    feature_scale: float = 1.0
    test_fraction: float = 0.2
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""


@dataclass
class EncodingConfig:
    B: Optional[int] = None
    N: int = 2
    min_d: int = 16
    max_m: int = 65536
    max_p: int = 200


@dataclass
class ExperimentConfig:
    # 协议参数
    n: int = 15
    f: int = 5
    delta: int = 2
    clamp: float = 0.001
    gamma: float = 0.5
    beta: float = 0.99
    T: int = 1000
    batch: int = 25
    l2: float = 1e-4
    alpha: float = 1.0

    # 攻击配置
    attack: str = "NONE"
    tau_grid: Tuple[float, ...] = DEFAULT_TAU_GRID
    attack_domain: str = "quantized"

    # 聚合配置
    subsample: bool = False
    agg_mode: str = "oracle"
    aggregator: str = "cwtm"
    quantize: bool = True

    # 运行配置
    eval_every: int = 10
    threads: int = 1
    seed: int = 1

    dataset: DatasetConfig = None
    encoding: EncodingConfig = None

    def __post_init__(self):
        if self.dataset is None:
            self.dataset = DatasetConfig()
        if self.encoding is None:
            self.encoding = EncodingConfig()
        self.attack = self.attack.upper()
        self.agg_mode = self.agg_mode.lower()
        self.aggregator = self.aggregator.lower()
        self.attack_domain = self.attack_domain.lower()
        self.dataset.kind = self.dataset.kind.lower()
        if self.dataset.classes is None:
            self.dataset.classes = DEFAULT_CLASSES.get(self.dataset.kind, DEFAULT_CLASSES["synthetic"])
        self.tau_grid = tuple(float(t) for t in self.tau_grid)

    @property
    def n_selected(self) -> int:
        """每轮参与聚合的输入个数"""
        return 2 * self.f + 1 if self.subsample else self.n

    @property
    def aggregator_label(self) -> str:
        return f"{self.aggregator}-sub" if self.subsample else self.aggregator

    def validate(self) -> "ExperimentConfig":
        """检查配置不变量，出错时抛出带键名的 ConfigError"""
        checks = [
            ("n", self.n >= 1, f"n={self.n} 必须为正"),
            ("f", 0 <= self.f and 2 * self.f < self.n, f"需要 0 <= f < n/2，收到 f={self.f}, n={self.n}"),
            ("delta", self.delta > 1, f"delta={self.delta} 必须大于 1"),
            ("clamp", self.clamp > 0, f"clamp={self.clamp} 必须为正"),
            ("gamma", self.gamma > 0, f"gamma={self.gamma} 必须为正"),
            ("beta", 0 < self.beta < 1, f"beta={self.beta} 需在 (0, 1) 内"),
            ("T", self.T >= 1, f"T={self.T} 必须为正"),
            ("batch", self.batch >= 1, f"batch={self.batch} 必须为正"),
            ("l2", self.l2 >= 0, f"l2={self.l2} 不能为负"),
            ("alpha", self.alpha > 0, f"alpha={self.alpha} 必须为正"),
            ("eval_every", self.eval_every >= 1, f"eval_every={self.eval_every} 必须为正"),
            ("threads", self.threads >= 1, f"threads={self.threads} 必须为正"),
            ("attack", self.attack in ATTACK_KINDS, f"未知的攻击 {self.attack}，可选 {ATTACK_KINDS}"),
            ("tau_grid", bool(self.tau_grid), "tau_grid 不能为空"),
            ("attack_domain", self.attack_domain in ATTACK_DOMAINS,
             f"未知的攻击域 {self.attack_domain}，可选 {ATTACK_DOMAINS}"),
            ("agg_mode", self.agg_mode in AGG_MODES, f"未知的聚合模式 {self.agg_mode}，可选 {AGG_MODES}"),
            ("aggregator", self.aggregator in AGGREGATORS,
             f"未知的聚合器 {self.aggregator}，可选 {AGGREGATORS}"),
            ("agg_mode", self.quantize or self.agg_mode == "oracle", "不量化时只能使用 oracle 聚合模式"),
            ("aggregator", self.aggregator != "cwmed" or self.n_selected % 2 == 1,
             f"cwmed 需要奇数个聚合输入，当前为 {self.n_selected}"),
            ("dataset.kind", self.dataset.kind in DATASET_KINDS,
             f"未知的数据集类型 {self.dataset.kind}，可选 {DATASET_KINDS}"),
            ("dataset.classes", self.dataset.classes >= 2, f"类别数 {self.dataset.classes} 至少为 2"),
            ("dataset.feature_scale", self.dataset.feature_scale > 0,
             f"feature_scale={self.dataset.feature_scale} 必须为正"),
            ("dataset.test_fraction", 0 < self.dataset.test_fraction < 1,
             f"test_fraction={self.dataset.test_fraction} 需在 (0, 1) 内"),
            ("encoding.N", self.encoding.N >= 1, f"encoding.N={self.encoding.N} 必须为正"),
            ("encoding.min_d", self.encoding.min_d >= 1, f"encoding.min_d={self.encoding.min_d} 必须为正"),
        ]
        for key, ok, message in checks:
            if not ok:
                raise ConfigError(message, key=key)
        if self.dataset.kind == "idx":
            for name in ("train_images", "train_labels", "test_images", "test_labels"):
                if not getattr(self.dataset, name):
                    raise ConfigError(f"idx 数据集需要 dataset.{name}", key=f"dataset.{name}")
        return self

    def to_mapping(self) -> Dict[str, str]:
        """配置的规范字符串形式，可以原样交给 config_from_mapping"""
        mapping = {}
        for section, obj in (("", self), ("dataset.", self.dataset), ("encoding.", self.encoding)):
            for field in fields(obj):
                if field.name in ("dataset", "encoding"):
                    continue
                value = getattr(obj, field.name)
                if value is None:
                    continue
                mapping[section + field.name] = _render(value)
        return mapping

    def to_lines(self) -> List[str]:
        return [f"{key}={value}" for key, value in sorted(self.to_mapping().items())]


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "auto", "none") else int(text)


_TOP_LEVEL: Dict[str, Callable[[str], Any]] = {
    "n": int, "f": int, "delta": int, "clamp": float, "gamma": float, "beta": float,
    "T": int, "batch": int, "l2": float, "alpha": float,
    "attack": str, "tau_grid": parse_tau_grid, "attack_domain": str,
    "subsample": parse_bool, "agg_mode": str, "aggregator": str, "quantize": parse_bool,
    "eval_every": int, "threads": int, "seed": int,
}
_DATASET: Dict[str, Callable[[str], Any]] = {
    "kind": str, "classes": _optional_int, "features": int, "size": int,
    "separation": float, "feature_scale": float, "test_fraction": float,
    "train_images": str, "train_labels": str, "test_images": str, "test_labels": str,
}
_ENCODING: Dict[str, Callable[[str], Any]] = {
    "B": _optional_int, "N": int, "min_d": int, "max_m": int, "max_p": int,
}


def _convert(key: str, text: str, converter: Callable[[str], Any]) -> Any:
    try:
        return converter(text.strip())
    except ValueError as e:
        raise ConfigError(f"配置项 {key} 的值 {text!r} 无法解析: {e}", key=key) from e


def config_from_mapping(raw: Dict[str, str]) -> ExperimentConfig:
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"缺少必需的配置项 {key}", key=key)

    top, dataset, encoding = {}, {}, {}
    for key, text in raw.items():
        section, _, name = key.rpartition(".")
        if section == "" and name in _TOP_LEVEL:
            top[name] = _convert(key, text, _TOP_LEVEL[name])
        elif section == "dataset" and name in _DATASET:
            dataset[name] = _convert(key, text, _DATASET[name])
        elif section == "encoding" and name in _ENCODING:
            encoding[name] = _convert(key, text, _ENCODING[name])
        else:
            raise ConfigError(f"未知的配置项 {key}", key=key)

    config = ExperimentConfig(
        dataset=DatasetConfig(**dataset), encoding=EncodingConfig(**encoding), **top
    )
    return config.validate()


def load_config(path: str) -> ExperimentConfig:
    try:
        raw = ConfigParser().parse_file(path)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
    return config_from_mapping(raw)
