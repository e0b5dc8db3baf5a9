import pytest

from uareg.dsp import BandConfig, FeatureConfig
from uareg.model import ModelConfig
from uareg.synthetic import ToneTask, make_corpus
from uareg.training import TrainConfig

SMALL_FEATURE = FeatureConfig(kind="mel", band=BandConfig(100, 1900), n_filters=32)
SMALL_MODEL = ModelConfig(n_classes=2, stem_channels=8, widths=[8, 16, 32, 64], blocks_per_stage=1,
                          heads=2, attn_dim=16, time_len=64)
SMALL_TRAIN = TrainConfig(alpha=0.0, p_lmr=0.0, lr=2e-3, batch=32, epochs=10, seed=0)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """2-class tone corpus: 40 train, 8 val, 20 test two-second records."""
    root = tmp_path_factory.mktemp("tiny")
    return make_corpus(root, ToneTask(), n_train=40, n_val=8, n_test=20, seed=0)


@pytest.fixture(scope="session")
def tiny_trained(tiny_corpus, tmp_path_factory):
    """A quickly trained baseline on the tiny corpus, saved with its run directory."""
    from dataclasses import replace

    from uareg.training import train
    out = tmp_path_factory.mktemp("run")
    res = train(tiny_corpus, SMALL_FEATURE, replace(SMALL_TRAIN, epochs=6, batch=16), SMALL_MODEL,
                out, segment_s=2.0)
    return res, out
