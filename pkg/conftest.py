import pytest

from specloc_core.config import get_settings
from specloc_core.shooting import clear_shot_cache

collect_ignore = ["examples"]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance checks that trace curves or scan long spectra")


@pytest.fixture(autouse=True)
def _fresh_caches():
    get_settings.cache_clear()
    clear_shot_cache()
    yield
    get_settings.cache_clear()
