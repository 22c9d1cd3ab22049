import pytest

from teugels_fbsde import levy_model as lm
from teugels_fbsde.teugels_basis import basis_for_model

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


MODELS = {
    "brownian": lm.brownian(),
    "poisson": lm.poisson(1.0, 1.0),
    "two_atom": lm.two_atom_gaussian(),
}


@pytest.fixture(params=sorted(MODELS))
def model_name(request):
    return request.param


@pytest.fixture(scope="session")
def two_atom():
    model = MODELS["two_atom"]
    return model, basis_for_model(model, 5)


@pytest.fixture(scope="session")
def brownian():
    model = MODELS["brownian"]
    return model, basis_for_model(model, 3)


@pytest.fixture(scope="session")
def poisson():
    model = MODELS["poisson"]
    return model, basis_for_model(model, 3)
