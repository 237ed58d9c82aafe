import numpy as np
import pytest

from mosvox import _kernels
from mosvox.synthetic import generate, reference_scene


def pytest_report_header(config):
    return f"mosvox kernel backend: {_kernels.active_name()} (available: {_kernels.available()})"


@pytest.fixture(params=_kernels.available())
def backend(request):
    return _kernels.get_backend(request.param)


@pytest.fixture(scope="session")
def reference_data():
    """The frozen 120-scan regression scene, generated once per session."""
    spec = reference_scene(count=120)
    scans, poses, labels = generate(spec)
    return spec, scans, poses, labels


@pytest.fixture(scope="session")
def small_scene_data():
    """Short variant of the reference scene for cheaper pipeline tests."""
    spec = reference_scene(count=25)
    scans, poses, labels = generate(spec)
    return spec, scans, poses, labels


@pytest.fixture(scope="session")
def reference_dataset(tmp_path_factory, small_scene_data):
    """Small scene written through the io formats (scans/, poses.txt, labels/)."""
    from mosvox.synthetic import write_dataset

    spec, _, _, = small_scene_data[:3]
    out = tmp_path_factory.mktemp("dataset")
    paths = write_dataset(spec, out)
    return paths
