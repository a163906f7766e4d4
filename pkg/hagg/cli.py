"""命令行入口：params、agg、bench、train、sweep

结果写到 stdout，日志写到 stderr。
"""
import argparse
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from config.config import DEFAULT_OUTPUT_DIR, config_from_mapping, load_config
from hagg.encoding import ParamSpec, pack, param_search
from hagg.errors import ConfigError, IdxFormatError, InvariantViolation, ParameterError
from hagg.homcircuit import COST_OPS, cost_report
from hagg.oracles import cwts
from hagg.protocol import run_training, server_aggregate, write_metrics_csv
from utils.logger import get_logger, setup_logging
from utils.parsers import VectorFileParser, parse_value_list

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INVALID = 2
EXIT_INVARIANT = 3


def _emit(lines: List[str]):
    for line in lines:
        sys.stdout.write(line + "\n")
    sys.stdout.flush()


def cmd_params(args: argparse.Namespace) -> int:
    B = args.B
    if args.delta is None and args.M is None and B is None:
        B = 2
    spec = ParamSpec(
        n=args.n, f=args.f, N=args.N, min_d=args.min_d, delta=args.delta,
        value_range=args.M, B=B, max_m=args.max_m, min_p=args.min_p, max_p=args.max_p,
    )
    _emit(param_search(spec).to_lines())
    return EXIT_OK


def _read_inputs(path: str) -> np.ndarray:
    try:
        matrix = VectorFileParser().parse_file(path)
    except ValueError as e:
        raise ParameterError(f"{path}: {e}") from e
    except OSError as e:
        raise ParameterError(f"无法读取输入文件 {path}: {e}") from e
    # 单行输入视为 n 个一维向量
    if matrix.shape[0] == 1:
        matrix = matrix.T.copy()
    return matrix


def cmd_agg(args: argparse.Namespace) -> int:
    inputs = _read_inputs(args.input)
    n, D = inputs.shape
    if args.op == "hmed":
        if n % 2 == 0:
            raise ParameterError(f"hmed 只接受奇数个输入，收到 n={n}")
        trim = n // 2
    else:
        trim = args.f

    offset = max(0, -int(inputs.min()))
    spec = ParamSpec(
        n=n, f=trim, N=args.N, min_d=args.min_d or min(D, 64),
        value_range=int(inputs.max()) + offset + 1, B=args.B, offset=offset,
        max_m=args.max_m, max_p=args.max_p,
    )
    enc = param_search(spec)
    logger.info(f"agg: n={n}, D={D}, op={args.op}, f={trim}, offset={offset}")

    batches = [pack(row, enc) for row in inputs]
    result, cost = server_aggregate(batches, trim, "homomorphic", args.threads)
    line = " ".join(str(int(v)) for v in result)
    logger.debug(f"agg 代价: 深度={cost.depth}, 密文乘法={cost.ct_ct_mults}")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(line + "\n")
        logger.info(f"聚合结果已写入 {args.out}")
    else:
        _emit([line])

    if args.oracle:
        matches = np.array_equal(result, cwts(inputs, trim))
        _emit(["MATCH" if matches else "MISMATCH"])
        if not matches:
            return EXIT_INVARIANT
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise ParameterError(f"n={args.n} 必须为正")
    if args.repeat < 1 or args.threads < 1:
        raise ParameterError(f"repeat={args.repeat} 与 threads={args.threads} 必须为正")
    if args.op == "hts":
        f, sum_width = args.f, args.n - 2 * args.f
    elif args.op == "hmed":
        f, sum_width = args.n // 2, 1
    else:
        f, sum_width = 0, 1
    spec = ParamSpec(
        n=args.n, f=f, N=args.N, min_d=1, B=args.B, sum_width=max(sum_width, 1),
        max_m=args.max_m, min_p=args.p, max_p=args.p,
    )
    enc = param_search(spec)

    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        reports = list(pool.map(lambda _: cost_report(args.n, f, enc, op=args.op), range(args.repeat)))
    elapsed = time.perf_counter() - start
    if any(r != reports[0] for r in reports):
        raise InvariantViolation("重复构建同一电路得到了不同的代价")
    logger.info(f"构建 {args.repeat} 次电路，{args.threads} 个线程，平均每次 {elapsed / args.repeat:.3f}s")
    _emit(reports[0].to_lines())
    return EXIT_OK


def _echo_config(config):
    for line in config.to_lines():
        logger.info(f"配置 {line}")


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.threads is not None:
        config.threads = args.threads
        config.validate()
    _echo_config(config)
    out = args.out or os.path.join(DEFAULT_OUTPUT_DIR, "metrics.csv")
    write_metrics_csv(run_training(config), out)
    return EXIT_OK


def _safe_name(text: str) -> str:
    return re.sub(r"[^\w.+-]", "_", text)


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_config(args.config)
    values = parse_value_list(args.values)
    out_dir = args.out_dir or DEFAULT_OUTPUT_DIR
    for value in values:
        mapping = base.to_mapping()
        mapping[args.key] = value
        config = config_from_mapping(mapping)
        _echo_config(config)
        path = os.path.join(out_dir, f"{_safe_name(args.key)}_{_safe_name(value)}.csv")
        write_metrics_csv(run_training(config), path)
    logger.info(f"扫描完成: {args.key} 共 {len(values)} 个取值")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hagg", description="同态鲁棒聚合与分布式训练模拟")
    parser.add_argument("--log-level", default=None, help="日志级别，默认取 HAGG_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="搜索 BGV 参数")
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--min-d", dest="min_d", type=int, default=1)
    p.add_argument("--B", type=int, default=None)
    p.add_argument("--delta", type=int, default=None)
    p.add_argument("--M", type=int, default=None, help="编码取值范围")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--f", type=int, default=0)
    p.add_argument("--max-m", dest="max_m", type=int, default=65536)
    p.add_argument("--min-p", dest="min_p", type=int, default=2)
    p.add_argument("--max-p", dest="max_p", type=int, default=200)
    p.set_defaults(handler=cmd_params)

    p = sub.add_parser("agg", help="对输入向量做同态截尾和或中位数")
    p.add_argument("input")
    p.add_argument("--op", choices=("hts", "hmed"), default="hts")
    p.add_argument("--f", type=int, default=0)
    p.add_argument("--B", type=int, default=None)
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--min-d", dest="min_d", type=int, default=None)
    p.add_argument("--max-m", dest="max_m", type=int, default=65536)
    p.add_argument("--max-p", dest="max_p", type=int, default=200)
    p.add_argument("--oracle", action="store_true", help="与明文参照比较并输出 MATCH/MISMATCH")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_agg)

    p = sub.add_parser("bench", help="输出电路代价")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--f", type=int, default=1)
    p.add_argument("--B", type=int, default=7)
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--p", type=int, default=131)
    p.add_argument("--op", choices=COST_OPS, default="hts")
    p.add_argument("--repeat", type=int, default=1, help="重复构建电路的次数")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-m", dest="max_m", type=int, default=65536)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("train", help="按配置文件训练")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sweep", help="对某个配置项的多个取值分别训练")
    p.add_argument("--config", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--values", required=True, help="逗号分隔的取值")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except (ParameterError, ConfigError, IdxFormatError) as e:
        logger.error(f"参数错误: {e}")
        return EXIT_INVALID
    except InvariantViolation as e:
        logger.error(f"不变量被破坏: {e}")
        return EXIT_INVARIANT
    except Exception as e:
        logger.exception(f"未预期的错误: {e}")
        return EXIT_UNEXPECTED
