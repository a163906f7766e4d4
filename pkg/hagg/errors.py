"""统一的异常类型，CLI 根据类型映射退出码"""
from typing import Optional


class HaggError(Exception):
    """所有库内异常的基类"""


class ParameterError(HaggError, ValueError):
    """参数或前置条件不满足"""


class RingMismatchError(ParameterError):
    """两个操作数属于不同的明文环"""


class EncodingRangeError(ParameterError):
    """数值超出编码范围"""


class SearchExhaustedError(ParameterError):
    """参数搜索在给定上界内无解"""


class ConfigError(HaggError, ValueError):
    """配置错误，key 指出出错的配置项"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class IdxFormatError(HaggError, ValueError):
    """IDX 文件格式错误，offset 为出错的字节偏移"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset={offset})")
        self.offset = offset


class InvariantViolation(HaggError, RuntimeError):
    """内部不变量被破坏"""


class IdxMagicError(IdxFormatError):
    """魔数不符"""


class IdxTruncatedError(IdxFormatError):
    """文件被截断"""


class IdxCountMismatchError(IdxFormatError):
    """图像与标签数量不一致"""
