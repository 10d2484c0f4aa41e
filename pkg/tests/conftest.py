import json
import os

import pytest

from teleclass import kernels
from teleclass.taxonomy import load_taxonomy

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation happens once here so timed tests measure steady state
    kernels.warmup()


@pytest.fixture()
def diamond():
    """root -> A, root -> B, A -> C, B -> C."""
    return load_taxonomy(
        json.dumps(
            {
                "nodes": [
                    {"id": 0, "name": "root"},
                    {"id": 1, "name": "A"},
                    {"id": 2, "name": "B"},
                    {"id": 3, "name": "C"},
                ],
                "edges": [[0, 1], [0, 2], [1, 3], [2, 3]],
            }
        )
    )


@pytest.fixture()
def two_family():
    """Synthetic-rooted taxonomy: hair care -> {shampoo, conditioner}, pets -> {dog food}."""
    return load_taxonomy(
        json.dumps(
            {
                "nodes": [
                    {"id": 0, "name": "hair care"},
                    {"id": 1, "name": "shampoo"},
                    {"id": 2, "name": "conditioner"},
                    {"id": 3, "name": "pets"},
                    {"id": 4, "name": "dog food"},
                ],
                "edges": [[0, 1], [0, 2], [3, 4]],
            }
        )
    )


def e2e_path(name: str) -> str:
    return os.path.join(DATA_DIR, "e2e", name)
