"""聚合器注册表：名称到截尾规则的映射，协议、攻击与 CLI 共用"""
from typing import Callable, Dict, List

import numpy as np

from hagg import oracles
from hagg.errors import ParameterError
from utils.logger import get_logger

logger = get_logger(__name__)


class AggregatorRegistry:
    def __init__(self):
        self.aggregators = {}
        self._register_default_aggregators()

    def _register_default_aggregators(self):
        """注册默认聚合器"""
        self.register_aggregator("cwtm", self._trim_cwtm,
                                 "逐坐标截尾均值，两侧各去掉 f 个")
        self.register_aggregator("cwmed", self._trim_cwmed,
                                 "逐坐标中位数，输入个数需为奇数")
        self.register_aggregator("mean", self._trim_mean,
                                 "不截尾的平均，作为非鲁棒基线")

    def register_aggregator(self, name: str, trim_rule: Callable[[int, int], int], description: str):
        """注册聚合器，trim_rule(输入个数, f) 返回每侧截去的个数"""
        self.aggregators[name] = {
            "trim_rule": trim_rule,
            "description": description,
        }
        logger.debug(f"注册聚合器 {name}")

    def names(self) -> List[str]:
        return list(self.aggregators)

    def describe(self) -> Dict[str, str]:
        return {name: info["description"] for name, info in self.aggregators.items()}

    def _lookup(self, name: str) -> Dict:
        if name not in self.aggregators:
            raise ParameterError(f"未知的聚合器 {name!r}，可选 {self.names()}")
        return self.aggregators[name]

    def trim_count(self, name: str, n_inputs: int, f: int) -> int:
        if n_inputs < 1:
            raise ParameterError(f"输入个数 {n_inputs} 必须为正")
        trim = self._lookup(name)["trim_rule"](n_inputs, f)
        if 2 * trim >= n_inputs:
            raise ParameterError(f"{name} 对 {n_inputs} 个输入每侧截去 {trim} 个，窗口为空")
        return trim

    def window(self, name: str, n_inputs: int, f: int) -> int:
        """截尾后参与求和的输入个数"""
        return n_inputs - 2 * self.trim_count(name, n_inputs, f)

    def aggregate(self, name: str, x, f: int) -> np.ndarray:
        """归一化的明文聚合结果（截尾和除以窗口宽度）"""
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        trim = self.trim_count(name, arr.shape[0], f)
        return oracles.cwts(arr, trim) / (arr.shape[0] - 2 * trim)

    @staticmethod
    def _trim_cwtm(n_inputs: int, f: int) -> int:
        return f

    @staticmethod
    def _trim_cwmed(n_inputs: int, f: int) -> int:
        if n_inputs % 2 == 0:
            raise ParameterError(f"cwmed 需要奇数个输入，收到 {n_inputs}")
        return (n_inputs - 1) // 2

    @staticmethod
    def _trim_mean(n_inputs: int, f: int) -> int:
        return 0
