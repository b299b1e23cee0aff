import logging
import os

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("TOPOLOSS_LOG_LEVEL", "INFO").upper()
OUTPUT_DIR = os.getenv("TOPOLOSS_OUTPUT_DIR", "runs")
N_JOBS = int(os.getenv("TOPOLOSS_N_JOBS", "-1"))
API_HOST = os.getenv("TOPOLOSS_API_HOST", "0.0.0.0")
API_PORT = int(os.getenv("TOPOLOSS_API_PORT", "8005"))


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
