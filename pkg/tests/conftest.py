import numpy as np
import pytest

from learnbnb.cran import CranConfig, CranInstance, generate_feasible_instance
from learnbnb.features import FeatureConfig
from learnbnb.mlp import MlpModel, PrunePolicy


@pytest.fixture(scope="session")
def small_cfg() -> CranConfig:
    """Three single-antenna RRHs, two users: every solve is milliseconds."""
    return CranConfig(rrh_count=3, user_count=2, antennas_per_rrh=1)


@pytest.fixture(scope="session")
def small_instance(small_cfg) -> CranInstance:
    return generate_feasible_instance(small_cfg, seed=11)


@pytest.fixture(scope="session")
def small_instances(small_cfg) -> list[CranInstance]:
    return [generate_feasible_instance(small_cfg, seed=100 + i) for i in range(6)]


def constant_policy(prune_logit: float, feature_cfg: FeatureConfig | None = None,
                    threshold: float = 0.5) -> PrunePolicy:
    """Policy whose prune probability is constant: sigmoid(prune_logit)."""
    cfg = feature_cfg or FeatureConfig()
    model = MlpModel(
        weights=[np.zeros((2, cfg.length))],
        biases=[np.array([prune_logit, 0.0])],
        schema_id=cfg.schema_id,
    )
    return PrunePolicy(model=model, threshold=threshold)


@pytest.fixture
def always_preserve() -> PrunePolicy:
    return constant_policy(-20.0)


@pytest.fixture
def always_prune() -> PrunePolicy:
    return constant_policy(20.0)
