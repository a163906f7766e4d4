import struct

import numpy as np
import pytest

from hagg import slot_algebra as sa
from hagg.encoding import EncodingParams, ParamSpec, encode_vector, param_search
from hagg.slot_algebra import RingParams


@pytest.fixture(scope="session")
def ring_n2():
    """m=11, p=131: N=2, d=5"""
    return RingParams.from_primes(11, 131)


@pytest.fixture(scope="session")
def ring_n3():
    """m=367, p=83: N=3, d=122"""
    return RingParams.from_primes(367, 83)


@pytest.fixture(scope="session")
def large_ring():
    """m=17293, p=131: N=3, d=5764"""
    return param_search(ParamSpec(n=15, f=5, N=3, min_d=5000, B=7)).ring


@pytest.fixture
def make_enc():
    def build(ring, B, **kwargs):
        return EncodingParams(ring=ring, B=B, **kwargs)
    return build


@pytest.fixture
def encode_tracked():
    """把一组非负整数编码进一个槽向量（其余槽为 0）"""
    def build(values, enc):
        return sa.wrap(encode_vector(np.asarray(values, dtype=np.int64), enc))
    return build


@pytest.fixture
def write_idx(tmp_path):
    """在 tmp_path 下写一对 2x2 像素的 IDX 文件，标签为 i % 10"""
    def build(images=3, labels=3, magic=0x803, cut=0):
        pixels = bytes(i % 256 for i in range(images * 4))
        image_bytes = struct.pack(">IIII", magic, images, 2, 2) + pixels
        if cut:
            image_bytes = image_bytes[:-cut]
        label_bytes = struct.pack(">II", 0x801, labels) + bytes(i % 10 for i in range(labels))
        image_path, label_path = tmp_path / "images.idx", tmp_path / "labels.idx"
        image_path.write_bytes(image_bytes)
        label_path.write_bytes(label_bytes)
        return str(image_path), str(label_path)
    return build
