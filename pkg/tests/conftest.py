import os

import pytest

from gibbsnet.synthetic import ensure_idx_corpus


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Small synthetic IDX corpus shared across CLI tests."""
    path = tmp_path_factory.mktemp("corpus")
    ensure_idx_corpus(path, train_count=400, test_count=120, seed=31)
    return str(path)


def mnist_dir():
    """Directory holding real MNIST IDX files, if one is available."""
    candidates = []
    env = os.environ.get("GIBBS_DATA_DIR")
    if env:
        candidates.append(env)
    candidates += ["data", os.path.expanduser("~/data/mnist")]
    for cand in candidates:
        for name in ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"):
            if os.path.exists(os.path.join(cand, name)):
                return cand
    return None
