import numpy as np


def random_density(n, rng, rank=None):
    rank = n if rank is None else rank
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(n, rng):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_product(dims, rng, mixed=False):
    d_A, d_B = dims
    if mixed:
        return np.kron(random_density(d_A, rng), random_density(d_B, rng))
    a, b = random_pure(d_A, rng), random_pure(d_B, rng)
    v = np.kron(a, b)
    return np.outer(v, v.conj())


def random_separable(dims, rng, terms=5):
    w = rng.dirichlet(np.ones(terms))
    return sum(wk * random_product(dims, rng, mixed=True) for wk in w)


def random_probabilities(dims, rng, sparse=False):
    p = rng.dirichlet(np.ones(dims[0] * dims[1])).reshape(dims)
    if sparse:
        p[rng.random(p.shape) < 0.4] = 0
        p.flat[0] += 1e-3
        p /= p.sum()
    return p


# criterion number -> (passed, detail), filled by the acceptance tests
RESULTS = {}


def report(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok
