from __future__ import annotations

import numpy as np
import pytest

from voxtrace import fixtures


@pytest.fixture(scope="session")
def asset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("assets")
    fixtures.write_fixtures(root)
    return root


def mc_mean_se(samples: np.ndarray) -> tuple[float, float]:
    """Mean and standard error of a 1-d Monte Carlo sample array."""
    samples = np.asarray(samples, dtype=np.float64)
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(len(samples)))
