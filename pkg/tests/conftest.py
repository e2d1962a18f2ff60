import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adasmem.config import InterleaveScheme, SimConfig, TimingConfig, TopologyConfig  # noqa: E402

REPO = Path(__file__).resolve().parents[1]


@pytest.fixture
def cfg() -> SimConfig:
    return SimConfig()


@pytest.fixture
def small_topo() -> TopologyConfig:
    # 64 KiB: 4 clusters x 4 arrays x 4 banks x 4 sub-banks x 4 rows x 32 B
    return TopologyConfig(masters=4, clusters=4, arrays_per_cluster=4, banks_per_array=4,
                          subbanks_per_bank=4, beat_bytes=32, total_bytes=64 * 1024)


def make_cfg(**kw) -> SimConfig:
    return SimConfig().with_overrides(**kw)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
