import numpy as np
import pytest


def central_fd(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), floor))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_ensemble(seed, d_in=2, d_out=2, M=3, kinds=None):
    """Untrained ensemble with non-trivial variance heads."""
    from uainv.ensemble import DeepEnsemble, EnsembleMember
    from uainv.nn import init_mlp

    rng = np.random.default_rng(seed)
    kinds = kinds or ["tanh", "relu", "elu", "celu", "leaky_relu", "hardswish", "softplus"]
    members = []
    for m in range(M):
        act = kinds[int(rng.integers(len(kinds)))]
        mean = init_mlp([d_in, 8, d_out], act, seed=int(rng.integers(1 << 30)))
        var = init_mlp([d_in, 5, d_out], "tanh", seed=int(rng.integers(1 << 30)))
        members.append(EnsembleMember(mean, var))
    return DeepEnsemble(tuple(members))


def brute_force_fronts(F):
    """O(n^2) peel-off reference for non-dominated sorting."""
    F = np.asarray(F, dtype=np.float64)
    left = list(range(len(F)))
    fronts = []
    while left:
        front = [i for i in left if not any(np.all(F[j] <= F[i]) and np.any(F[j] < F[i]) for j in left)]
        fronts.append(sorted(front))
        left = [i for i in left if i not in front]
    return fronts


def tiny_config_dict(**over):
    """A benchmark configuration that runs in a few seconds."""
    d = {
        "nfp": {"kind": "sine1d"},
        "n_samples": 300,
        "surrogate": {"hidden": [16, 16], "train": {"learning_rate": 0.01, "epochs": 20, "batch_size": 64}},
        "ensemble": {"n_members": 2, "mean_hidden": [16], "var_hidden": [8],
                     "stage1": {"learning_rate": 0.01, "epochs": 15, "batch_size": 64},
                     "stage2": {"learning_rate": 0.01, "epochs": 10, "batch_size": 64}},
        "inversion": {"max_iters": 40, "restarts": 2},
        "tandem": {"hidden": [16], "train": {"learning_rate": 0.01, "epochs": 5, "batch_size": 64}},
        "method_seeds": 2,
        "target_count": 12,
        "repeat_count": 2,
        "seed": 3,
    }
    d.update(over)
    return d


ACCEPTANCE = {}


def record(number, ok, detail):
    """Store and print one acceptance line; the terminal summary repeats them in order."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
