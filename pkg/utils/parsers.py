import re
from typing import List, Dict, Tuple

import numpy as np


class ConfigParser:
    """配置解析器，解析扁平的 key=value 文本"""

    def __init__(self):
        self.patterns = {
            'blank': r'^\s*(#.*)?$',
            'pair': r'^\s*([A-Za-z_][\w.]*)\s*=\s*(.*?)\s*(#.*)?$',
        }

    def parse_content(self, content: str) -> Dict[str, str]:
        """解析内容，返回有序的键值字典"""
        result = {}
        for lineno, line in enumerate(content.splitlines(), 1):
            if re.match(self.patterns['blank'], line):
                continue
            match = re.match(self.patterns['pair'], line)
            if not match:
                raise ValueError(f"第 {lineno} 行不是 key=value 格式: {line.strip()!r}")
            key, value = match.group(1), match.group(2)
            if key in result:
                raise ValueError(f"第 {lineno} 行重复定义 {key}")
            result[key] = value
        return result

    def parse_file(self, path: str) -> Dict[str, str]:
        with open(path, 'r', encoding='utf-8') as f:
            return self.parse_content(f.read())


class VectorFileParser:
    """输入向量文件解析器：每行一个向量，空格分隔的整数"""

    def __init__(self):
        self.patterns = {
            'blank': r'^\s*(#.*)?$',
            'row': r'^\s*-?\d+(\s+-?\d+)*\s*$',
        }

    def parse_content(self, content: str) -> np.ndarray:
        rows = []
        for lineno, line in enumerate(content.splitlines(), 1):
            if re.match(self.patterns['blank'], line):
                continue
            if not re.match(self.patterns['row'], line):
                raise ValueError(f"第 {lineno} 行包含非整数内容: {line.strip()!r}")
            rows.append([int(tok) for tok in line.split()])

        if not rows:
            raise ValueError("输入文件中没有向量")
        widths = {len(row) for row in rows}
        if len(widths) != 1:
            raise ValueError(f"向量维度不一致: {sorted(widths)}")
        return np.array(rows, dtype=np.int64)

    def parse_file(self, path: str) -> np.ndarray:
        with open(path, 'r', encoding='utf-8') as f:
            return self.parse_content(f.read())


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"无法解析布尔值: {text!r}")


def parse_value_list(text: str) -> List[str]:
    """逗号分隔的值列表"""
    values = [tok.strip() for tok in text.split(',')]
    if not values or any(not tok for tok in values):
        raise ValueError(f"值列表为空或包含空项: {text!r}")
    return values


def parse_tau_grid(text: str) -> Tuple[float, ...]:
    """τ 网格：逗号列表，或 linspace:lo:hi:count"""
    match = re.match(r'^\s*linspace:([-+\d.eE]+):([-+\d.eE]+):(\d+)\s*$', text)
    if match:
        lo, hi, count = float(match.group(1)), float(match.group(2)), int(match.group(3))
        if count < 1:
            raise ValueError("τ 网格至少需要一个点")
        return tuple(float(x) for x in np.linspace(lo, hi, count))
    return tuple(float(tok) for tok in parse_value_list(text))
