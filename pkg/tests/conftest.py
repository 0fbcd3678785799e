import numpy as np
import pytest

from miqa_pns.autodiff import Tape, Tensor


def central_difference(f, arrays, step=1e-5):
    """Numerical gradient of scalar ``f(*arrays)`` w.r.t. each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = a[i]
            a[i] = orig + step
            hi = f(*arrays)
            a[i] = orig - step
            lo = f(*arrays)
            a[i] = orig
            g[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def tape_gradients(build, arrays):
    """Run ``build(*tensors)`` on a fresh tape, backprop, return (value, grads)."""
    with Tape() as tape:
        ts = [Tensor(a.copy()) for a in arrays]
        root = build(*ts)
        tape.backward(root)
    return root.item(), [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def tape_value(build):
    def f(*arrays):
        with Tape():
            return build(*[Tensor(a) for a in arrays]).item()

    return f


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
