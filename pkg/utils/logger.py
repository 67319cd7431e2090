import logging
import os

_created = set()


def get_logger(name):
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        handler.setFormatter(formatter)
        logger.addHandler(handler)
        logger.setLevel(getattr(logging, os.getenv("MVF_LOG_LEVEL", "INFO").upper(), logging.INFO))
        _created.add(name)
    return logger


def set_log_level(level):
    """统一调整 get_logger 创建的所有日志器级别"""
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logging.getLogger().setLevel(level)
    for name in _created:
        logging.getLogger(name).setLevel(level)
