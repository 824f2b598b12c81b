# Logging and environment bootstrap shared by every command
import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def load_environment() -> str:
    """Load environment variables, preferring the local file used for experiments"""
    if os.path.exists('.env.local'):
        load_dotenv('.env.local', override=True)
        return '.env.local'
    load_dotenv(override=False)
    return '.env'


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Configure root logging with a console handler and an optional UTF-8 run log"""
    level_name = (level or os.getenv('NEURONML_LOG_LEVEL', 'INFO')).upper()
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        format=LOG_FORMAT,
        level=getattr(logging, level_name, logging.INFO),
        handlers=handlers,
        force=True,
    )
