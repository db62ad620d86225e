import random
from pathlib import Path

import numpy as np
import pytest

from gffmetric.network import BoundarySpec, Edge, Network

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


def random_connected_network(rng: random.Random, n: int, extra: int, cmin=0.2, cmax=5.0) -> Network:
    """Random spanning tree plus ``extra`` random chords (parallel edges allowed)."""
    verts = [f"v{i}" for i in range(n)]
    edges = []
    for i in range(1, n):
        edges.append(Edge(verts[rng.randrange(i)], verts[i], rng.uniform(cmin, cmax)))
    for _ in range(extra):
        a, b = rng.sample(range(n), 2)
        edges.append(Edge(verts[a], verts[b], rng.uniform(cmin, cmax)))
    return Network(verts, edges)


def random_boundary(rng: random.Random, net: Network, k: int, lo=-1.0, hi=1.0) -> BoundarySpec:
    pts = rng.sample(list(net.vertices), k)
    return BoundarySpec({p: rng.uniform(lo, hi) for p in pts})


def dense_laplacian(net: Network) -> np.ndarray:
    """Independent dense Laplacian assembled edge by edge."""
    L = np.zeros((net.n, net.n))
    ix = {v: i for i, v in enumerate(net.vertices)}
    for e in net.edges:
        a, b = ix[e.u], ix[e.v]
        L[a, a] += e.conductance
        L[b, b] += e.conductance
        L[a, b] -= e.conductance
        L[b, a] -= e.conductance
    return L
