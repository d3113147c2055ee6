import hypothesis
import numpy as np
import pytest

from depthpipe.depth_io import DepthSequence

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_sequence(rng, t=None, h=None, w=None, video_id="v"):
    t = t or int(rng.integers(1, 12))
    h = h or int(rng.integers(3, 16))
    w = w or int(rng.integers(1, 16))
    return DepthSequence(rng.uniform(0.0, 10.0, size=(t, h, w)).astype(np.float32), video_id)


# a scaled-down pipeline so end-to-end tests stay fast
SMALL_SPEC = dict(frames=20, width=24, height=24, region_size=(6, 10))
SMALL_CFG = dict(flat_dim=64, map_shape=(7, 7, 16), pca_dim=8, vlad_k=4, vlad_dim=32,
                 max_fit_descriptors=2000)


@pytest.fixture(scope="session")
def small_bench(tmp_path_factory):
    from depthpipe.benchmark import BenchmarkSpec, make_benchmark

    root = tmp_path_factory.mktemp("bench")
    make_benchmark(root, videos_per_class=6, rng_seed=3, spec=BenchmarkSpec(**SMALL_SPEC))
    return root / "manifest.csv"


# verdict lines recorded by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
