"""Independent oracles used by the test suite.

Everything here is deliberately written the slow, obvious way and shares no
code with the package: backtracking isomorphism, double-loop MMD, central
finite differences. Agreement between package and oracle is the evidence.
"""

import math

import numpy as np

from molgen3d.chem.graph import MolecularGraph2D


def graphs_isomorphic(a: MolecularGraph2D, b: MolecularGraph2D) -> bool:
    """Exact isomorphism by backtracking over label-compatible candidates."""
    if a.n_atoms != b.n_atoms or len(a.bonds) != len(b.bonds):
        return False

    def label(g, i):
        return (g.atoms[i].symbol, g.atoms[i].charge)

    adj_a = [dict() for _ in range(a.n_atoms)]
    adj_b = [dict() for _ in range(b.n_atoms)]
    for bond in a.bonds:
        adj_a[bond.i][bond.j] = bond.order
        adj_a[bond.j][bond.i] = bond.order
    for bond in b.bonds:
        adj_b[bond.i][bond.j] = bond.order
        adj_b[bond.j][bond.i] = bond.order

    def signature(g, adj, i):
        return (label(g, i), tuple(sorted(adj[i].values())))

    if sorted(signature(a, adj_a, i) for i in range(a.n_atoms)) != sorted(
        signature(b, adj_b, i) for i in range(b.n_atoms)
    ):
        return False

    # Match the most constrained (highest degree) atoms first.
    order = sorted(range(a.n_atoms), key=lambda i: -len(adj_a[i]))
    mapping: dict[int, int] = {}
    used = [False] * b.n_atoms

    def extend(pos: int) -> bool:
        if pos == len(order):
            return True
        i = order[pos]
        for j in range(b.n_atoms):
            if used[j] or signature(a, adj_a, i) != signature(b, adj_b, j):
                continue
            ok = True
            for nb, bond_order in adj_a[i].items():
                if nb in mapping and adj_b[j].get(mapping[nb]) != bond_order:
                    ok = False
                    break
            # Mapped b-neighbors of j must all be images of a-neighbors of i.
            if ok:
                inverse = {v: k for k, v in mapping.items()}
                for nb, bond_order in adj_b[j].items():
                    if nb in inverse and adj_a[i].get(inverse[nb]) != bond_order:
                        ok = False
                        break
            if not ok:
                continue
            mapping[i] = j
            used[j] = True
            if extend(pos + 1):
                return True
            del mapping[i]
            used[j] = False
        return False

    return extend(0)


def mmd_bruteforce(a, b) -> float:
    """Unbiased Gaussian-kernel MMD^2, double loops, median bandwidth."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    pooled = a + b
    diffs = []
    for i in range(len(pooled)):
        for j in range(i + 1, len(pooled)):
            diffs.append(abs(pooled[i] - pooled[j]))
    diffs.sort()
    n = len(diffs)
    if n == 0:
        med = 0.0
    elif n % 2:
        med = diffs[n // 2]
    else:
        med = 0.5 * (diffs[n // 2 - 1] + diffs[n // 2])
    sigma = med if med > 0 else 1.0
    gamma = 1.0 / (2.0 * sigma * sigma)

    def k(x, y):
        return math.exp(-gamma * (x - y) * (x - y))

    m, n_b = len(a), len(b)
    term_a = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                term_a += k(a[i], a[j])
    term_a /= m * (m - 1)
    term_b = 0.0
    for i in range(n_b):
        for j in range(n_b):
            if i != j:
                term_b += k(b[i], b[j])
    term_b /= n_b * (n_b - 1)
    term_ab = 0.0
    for i in range(m):
        for j in range(n_b):
            term_ab += k(a[i], b[j])
    term_ab *= 2.0 / (m * n_b)
    return max(term_a + term_b - term_ab, 0.0)


def fd_gradient(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar f at x, float64."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        fp = f(x)
        flat[idx] = orig - eps
        fm = f(x)
        flat[idx] = orig
        gflat[idx] = (fp - fm) / (2.0 * eps)
    return grad


def max_normalized_error(ad: np.ndarray, fd: np.ndarray) -> float:
    """max |ad - fd| scaled by max(1, largest gradient magnitude)."""
    ad = np.asarray(ad, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(fd))), float(np.max(np.abs(ad))))
    return float(np.max(np.abs(ad - fd))) / scale
