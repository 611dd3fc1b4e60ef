import pathlib
import threading

import numpy as np
import pytest

from gcinfer import compiler, session
from gcinfer.fixedpt import LayerSpec, ModelDescriptor, encode_array

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def fc_model(name, sizes, act="tanh_cordic", seed=0, bias=False, scale=None):
    """Seeded fully-connected model with an activation between layers."""
    rng = np.random.default_rng(seed)
    layers = []
    for li, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        s = scale if scale is not None else 1.0 / np.sqrt(a)
        layers.append(LayerSpec(
            "FullyConnected", {"in": a, "out": b},
            weights=encode_array(rng.normal(0, s, (b, a))),
            bias=encode_array(rng.normal(0, 0.1, b)) if bias else None))
        if li < len(sizes) - 2:
            layers.append(LayerSpec("NonLinearity", {"size": b}, activation=act))
    return ModelDescriptor(name, layers, (sizes[0],))


def run_direct_session(model, compiled, x, *, ot_mode="test-dealer",
                       seed=b"session-seed", delay=0.0):
    """One loopback client/server inference; returns (label, client_channel)."""
    ca, cb = session.loopback_pair(delay=delay)
    errors = []

    def serve():
        try:
            session.run_server(model, compiled, cb, ot_mode=ot_mode)
        except Exception as exc:  # re-raised on the main thread
            errors.append(exc)

    th = threading.Thread(target=serve)
    th.start()
    try:
        label = session.run_client(x, compiled, ca, seed=seed, ot_mode=ot_mode)
    finally:
        th.join(timeout=120)
    if errors:
        raise errors[0]
    return label, ca


def run_outsourced_session(model, compiled, x, *, ot_mode="test-dealer",
                           seed=b"proxy-seed", rng=None):
    """Three-party loopback run; returns the label seen by the weak client."""
    cp_client, cp_proxy = session.loopback_pair()
    cs_client, cs_server = session.loopback_pair()
    ps_proxy, ps_server = session.loopback_pair()
    errors = []

    def proxy():
        try:
            session.run_proxy(compiled, cp_proxy, ps_proxy, seed=seed,
                              ot_mode=ot_mode)
        except Exception as exc:
            errors.append(exc)

    def serve():
        try:
            session.run_server(model, compiled, ps_server, ot_mode=ot_mode,
                               client_chan=cs_server)
        except Exception as exc:
            errors.append(exc)

    tp = threading.Thread(target=proxy)
    ts = threading.Thread(target=serve)
    tp.start()
    ts.start()
    try:
        label = session.run_outsourced(x, compiled, cp_client, cs_client,
                                       ot_mode=ot_mode, rng=rng)
    finally:
        tp.join(timeout=120)
        ts.join(timeout=120)
    if errors:
        raise errors[0]
    return label


@pytest.fixture(scope="session")
def small_net():
    return fc_model("small", [6, 5, 4], act="relu", seed=3)


@pytest.fixture(scope="session")
def small_net_compiled(small_net):
    return compiler.compile_model(small_net, "unrolled")
