import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hqnn.autodiff import Tensor, backward, bce_loss, zero_grad  # noqa: E402
from hqnn.models import forward  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def central_fd(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar f at every entry of x (x is restored)."""
    g = np.empty_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def model_gradients(model, image, label):
    params = model.parameters()
    zero_grad(params)
    loss = bce_loss(forward(model, Tensor(image)), label)
    backward(loss)
    return loss.item(), {name: t.grad.copy() for name, t in model.params.items()}


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
