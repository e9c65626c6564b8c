import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def kron_ops(n):
    """Dense sigma_j (kron order, site 0 leftmost) as an independent reference."""
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    out = []
    for j in range(n):
        op = np.array([[1.0 + 0j]])
        for i in range(n):
            op = np.kron(op, sm if i == j else np.eye(2))
        out.append(op)
    return out


def dense_rhs(chain, rho):
    """Master-equation right-hand side written directly from the operator sums."""
    from wgdark.couplings import build_couplings

    n = chain.n_total
    c = build_couplings(chain)
    s = kron_ops(n)
    h = sum((c.j[a, b] - 0.5j * c.g[a, b]) * s[a].conj().T @ s[b] for a in range(n) for b in range(n))
    h = h - 0.5j * (chain.gamma_nr + 2 * chain.gamma_phi) * sum(x.conj().T @ x for x in s)
    out = -1j * (h @ rho - rho @ h.conj().T)
    out += sum(c.g[a, b] * s[a] @ rho @ s[b].conj().T for a in range(n) for b in range(n))
    out += chain.gamma_nr * sum(x @ rho @ x.conj().T for x in s)
    out += 2 * chain.gamma_phi * sum((x.conj().T @ x) @ rho @ (x.conj().T @ x) for x in s)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one (criterion, ok, detail) line per acceptance criterion."""
    return request.config.stash.setdefault(ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(ACCEPTANCE, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(log, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    passed = sum(ok for _, ok, _ in log)
    terminalreporter.write_line(f"{passed}/{len(log)} criteria passed")
