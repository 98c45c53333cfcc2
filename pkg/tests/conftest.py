import os

import pytest
import logging

os.makedirs("reports", exist_ok=True)
logging.basicConfig(
    filename="reports/tests.log",
    filemode="a",
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    level=logging.DEBUG,
)

logger = logging.getLogger(__name__)


@pytest.fixture
def context():
    """Mutable scratch space shared by the steps of one scenario"""
    return {}


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return str(path)
