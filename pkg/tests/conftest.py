import numpy as np
import pytest

from dualseg.config import ModelConfig

# Small-but-complete model: every topology feature present, fast to run.
TINY_CFG = ModelConfig(
    input_size=(64, 64),
    cp_widths=(8, 12, 16, 24, 32),
    sp_widths=(8, 8, 12),
    sp_proj_channels=12,
    fuse8_channels=16,
    decoder_widths=(24, 16, 8),
)


@pytest.fixture
def tiny_cfg() -> ModelConfig:
    return TINY_CFG


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def identity_bn_updates(weights, nodes, eps: float) -> dict:
    """BN parameter overrides that make every BN an exact identity.

    var = 1 - eps gives sqrt(var + eps) == 1 exactly, so gamma=1, beta=0,
    mean=0 passes values through bit-for-bit.
    """
    updates = {}
    for node in nodes:
        if getattr(node, "op", None) == "conv" and node.bn:
            c = node.spec.out_channels
            updates[f"{node.path}.bn.gamma"] = np.ones(c, np.float32)
            updates[f"{node.path}.bn.beta"] = np.zeros(c, np.float32)
            updates[f"{node.path}.bn.mean"] = np.zeros(c, np.float32)
            updates[f"{node.path}.bn.var"] = np.full(c, 1.0 - eps, np.float32)
    return updates
