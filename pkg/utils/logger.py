import os
import sys

from loguru import logger

_configured = False


def setup_logging(level: str = None):
    """只保留一个 stderr 输出，stdout 留给命令结果"""
    global _configured
    level = level or os.getenv("HAGG_LOG_LEVEL", "INFO")
    logger.remove()
    logger.configure(extra={"component": "hagg"})
    logger.add(sys.stderr, level=level.upper(),
               format="{time:HH:mm:ss} | {level: <7} | {extra[component]} | {message}")
    _configured = True


def get_logger(name):
    if not _configured:
        setup_logging()
    return logger.bind(component=name)
