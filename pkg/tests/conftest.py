import pytest

from klda import backends


def _available_backends():
    names = ["numpy"]
    if backends.HAVE_NUMBA:
        names.insert(0, "numba")
    return names


@pytest.fixture(params=_available_backends())
def backend(request, monkeypatch):
    """Run the test under each installed kernel backend."""
    monkeypatch.setenv(backends.BACKEND_ENV_VAR, request.param)
    return request.param


@pytest.fixture
def numba_backend(monkeypatch):
    if not backends.HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setenv(backends.BACKEND_ENV_VAR, "numba")
    return "numba"
