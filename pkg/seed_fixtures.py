# seed_fixtures.py
# Regenerates the bundled synthetic dataset in fixtures/: one trajectory CSV
# per coupled_ticvf_*.toml run config, written exactly as `cli.py simulate` would.
import logging
import sys
from pathlib import Path

from config import SystemConfig, build_model, build_protocol
from config_loader import load_run_config
from paradigms import simulate
from report_utils import write_trajectory

logger = logging.getLogger(__name__)

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def seed(directory: Path = FIXTURES) -> list:
    written = []
    for config_path in sorted(directory.glob("coupled_ticvf_*.toml")):
        config = load_run_config(config_path)
        traj = simulate(build_model(config), build_protocol(config))
        written.append(write_trajectory(traj, config_path.with_suffix(".csv")))
        logger.info(f"   📈 {config_path.stem}: final x = {traj.final_x!r}")
    return written


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format=SystemConfig.LOG_FORMAT, stream=sys.stderr)
    logger.info("🚀 Seeding fixtures...")
    paths = seed()
    logger.info(f"✅ Wrote {len(paths)} trajectory file(s) to {FIXTURES}")
