import os
from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

DEFAULT_SEED = 0
DEFAULT_OUTPUT_DIR = "out"
SCENARIO_DIR = "data/scenarios"

POLICY_TICK_SECONDS = 30.0
MAX_SIMULATED_SECONDS = 7 * 24 * 3600.0
JOB_SETUP_SECONDS = 270.0
FAILURE_DETECTION_SECONDS = 180.0

DEFAULT_BASE_PREFIX = "10.8.0.0/16"
DEFAULT_IDLE_TIMEOUT = 300.0
DEFAULT_POWEROFF_GRACE = 120.0

API_HOST = os.getenv("API_HOST", "0.0.0.0")
API_PORT = int(os.getenv("API_PORT", "8000"))
