"""Command-line entry point binding the library together.

Exit codes: 0 success, 1 usage error, 2 protocol abort, 3 validation
failure.  ``--ot-mode test-dealer`` disables the cryptographic transfer and
is for tests only; it announces itself loudly.
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys

import numpy as np

from . import __version__, costmodel, ot, preprocess
from .circuit import NetlistError, parse, serialize
from .compiler import compile_model
from .fixedpt import ModelDescriptor, ShapeMismatch, encode_array, load_model
from .garble import CIPHER_ID
from .session import (ProtocolViolation, SocketChannel, run_client,
                      run_outsourced, run_proxy, run_server)

log = logging.getLogger("gcinfer")

INSECURE_BANNER = (
    "*** INSECURE: test-dealer transfer mode exchanges selection bits in\n"
    "*** the clear. Use it for tests and cost accounting only.")


class UsageError(Exception):
    pass


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"bad address {text!r}, expected host:port")
    return host, int(port)


def _load_input(path: str, expect: int) -> np.ndarray:
    with open(path) as fh:
        doc = json.load(fh)
    if "raw" in doc:
        vals = np.asarray(doc["raw"], dtype=np.int64) & 0xFFFF
    elif "values" in doc:
        vals = encode_array(np.asarray(doc["values"], dtype=np.float64))
    else:
        raise UsageError("input file needs a 'raw' or 'values' array")
    if len(vals) != expect:
        raise ShapeMismatch(f"input has {len(vals)} elements, model wants {expect}")
    return vals


def _compiled_from_args(args) -> tuple[ModelDescriptor, object]:
    model = load_model(args.model)
    mode = args.mode
    if mode == "auto":
        if getattr(args, "netlist", None):
            with open(args.netlist) as fh:
                header = fh.readline().split()
            mode = "folded" if len(header) >= 3 and int(header[2]) > 1 else "unrolled"
        else:
            mode = "unrolled"
    compiled = compile_model(model, mode, outsourced=getattr(args, "outsource", False)
                             or getattr(args, "outsourced", False))
    if getattr(args, "netlist", None):
        with open(args.netlist) as fh:
            if fh.read() != serialize(compiled.netlist):
                raise ProtocolViolation(
                    "netlist file does not match the model compiled at "
                    f"mode={mode}; regenerate it with 'compile'")
    return model, compiled


def _maybe_banner(args):
    if getattr(args, "ot_mode", None) == "test-dealer":
        print(INSECURE_BANNER, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_compile(args) -> int:
    model = load_model(args.model)
    compiled = compile_model(model, args.mode, emit_argmax=not args.no_argmax,
                             outsourced=args.outsourced)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(serialize(compiled.netlist))
    stats = compiled.netlist.stats()
    doc = {"mode": args.mode, "cycles": compiled.netlist.cycles,
           "digest": compiled.model_digest,
           "xor": stats.total_xor, "nonxor": stats.total_nonxor,
           "xor_per_cycle": stats.xor, "nonxor_per_cycle": stats.nonxor,
           "wires": compiled.netlist.n_wires, "gates": compiled.netlist.n_gates}
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.stats == "-":
        print(text)
    elif args.stats:
        with open(args.stats, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_stats(args) -> int:
    with open(args.netlist) as fh:
        net = parse(fh.read())
    net.validate()
    s = net.stats()
    doc = {"cycles": net.cycles, "xor": s.total_xor, "nonxor": s.total_nonxor,
           "xor_per_cycle": s.xor, "nonxor_per_cycle": s.nonxor,
           "wires": net.n_wires, "gates": net.n_gates}
    print(json.dumps(doc, indent=2, sort_keys=True) if args.json
          else "\n".join(f"{k}: {v}" for k, v in doc.items()))
    return 0


def cmd_estimate(args) -> int:
    params = costmodel.CostParams(bw_net=args.bw)
    if args.analytic:
        if not args.model:
            raise UsageError("--analytic needs --model")
        costs = (costmodel.ComponentCosts.published() if args.published_costs
                 else costmodel.ComponentCosts.measured())
        report = costmodel.estimate_model(load_model(args.model), "analytic",
                                          params, costs)
    else:
        if not args.netlist:
            raise UsageError("estimate needs --netlist (or --analytic --model)")
        with open(args.netlist) as fh:
            net = parse(fh.read())
        report = costmodel.estimate(net.stats(), params)
    doc = report.to_json()
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(f"xor {doc['xor_count']}  nonxor {doc['nonxor_count']}")
        print(f"t_comp {doc['t_comp_seconds']:.4f} s")
        print(f"comm {doc['comm_mb']:.2f} MB")
        if "t_comm_seconds" in doc:
            print(f"t_comm {doc['t_comm_seconds']:.4f} s")
    return 0


def cmd_preprocess(args) -> int:
    A = np.loadtxt(args.train, delimiter=",", ndmin=2)
    labels = np.loadtxt(args.labels, delimiter=",").astype(int).reshape(-1)
    if A.shape[1] != len(labels):
        raise ShapeMismatch(f"{A.shape[1]} samples vs {len(labels)} labels")
    cfg = preprocess.ProjectionConfig(gamma=args.gamma, patience=args.patience,
                                      n_batch=args.batch)
    sizes = ([A.shape[0]] + [int(s) for s in args.net.split(",")]
             if args.net else [A.shape[0], 16, int(labels.max()) + 1])
    trainer = preprocess.MinimalTrainer(sizes, seed=args.seed or 0,
                                        val_data=A, val_labels=labels)
    pm, trainer = preprocess.build_projection(A, labels, cfg, trainer)
    report = preprocess.verify_projector(pm.W, pm.D)
    with open(args.out, "w") as fh:
        json.dump({"l": pm.l, "epsilon": pm.epsilon_report,
                   "projector_checks": report,
                   "W": pm.W.tolist()}, fh)
    print(f"dictionary size {pm.l}, relative reconstruction error "
          f"{pm.epsilon_report:.4f}, projector checks "
          f"{'passed' if report['passed'] else 'FAILED'}")
    return 0 if report["passed"] else 3


def cmd_prune(args) -> int:
    model = load_model(args.model)
    pruned, masks = preprocess.magnitude_prune(
        model, fraction=args.fraction, threshold=args.threshold)
    if args.retrain_epochs and args.train:
        A = np.loadtxt(args.train, delimiter=",", ndmin=2)
        labels = np.loadtxt(args.labels, delimiter=",").astype(int).reshape(-1)
        sizes = [model.input_shape[0]] + \
            [l.dims["out"] for l in model.layers if l.kind == "FullyConnected"]
        trainer = preprocess.MinimalTrainer(sizes, seed=args.seed or 0)
        from .fixedpt import decode_array
        fc = [l for l in model.layers if l.kind == "FullyConnected"]
        for li, layer in enumerate(fc):
            trainer.weights[li] = decode_array(layer.weights)
            if layer.bias is not None:
                trainer.biases[li] = decode_array(layer.bias)
        preprocess.retrain_pruned(trainer, masks, model, A, labels,
                                  epochs=args.retrain_epochs,
                                  seed=args.seed or 0)
        act = next((l.activation for l in model.layers
                    if l.kind == "NonLinearity"), "tanh_pl")
        pruned = trainer.export_model(model.name + "_pruned", act)
    elif args.retrain_epochs:
        log.warning("no --train data given; skipping the re-training pass")
    from .fixedpt import save_model
    save_model(pruned, args.out)
    kept = sum(int(m.sum()) for m in masks.values())
    total = sum(m.size for m in masks.values())
    print(f"pruned {total - kept}/{total} weights across {len(masks)} layers")
    return 0


def cmd_serve(args) -> int:
    _maybe_banner(args)
    model, compiled = _compiled_from_args(args)
    host, port = _parse_addr(args.listen)
    srv = socket.create_server((host, port))
    print(f"serving {compiled.model_digest[:16]}... on {host}:{port}")
    try:
        while True:
            conn, peer = srv.accept()
            log.info("session from %s", peer)
            chan = SocketChannel(conn)
            client_chan = None
            if compiled.outsourced:
                conn2, _ = srv.accept()
                client_chan = SocketChannel(conn2)
            try:
                run_server(model, compiled, chan, ot_mode=args.ot_mode,
                           client_chan=client_chan)
            finally:
                chan.close()
                if client_chan:
                    client_chan.close()
            if args.once:
                return 0
    finally:
        srv.close()


def cmd_infer(args) -> int:
    _maybe_banner(args)
    model, compiled = _compiled_from_args(args)
    x = _load_input(args.input, compiled.input_size)
    if args.outsource:
        if not args.proxy:
            raise UsageError("--outsource needs --proxy")
        pa = socket.create_connection(_parse_addr(args.proxy))
        sa = socket.create_connection(_parse_addr(args.connect))
        label = run_outsourced(x, compiled, SocketChannel(pa), SocketChannel(sa),
                               ot_mode=args.ot_mode)
    else:
        sock = socket.create_connection(_parse_addr(args.connect))
        seed = (args.seed.to_bytes(16, "big") if args.seed is not None else None)
        label = run_client(x, compiled, SocketChannel(sock), seed=seed,
                           ot_mode=args.ot_mode)
    print(json.dumps({"label": label}))
    return 0


def cmd_proxy(args) -> int:
    _maybe_banner(args)
    _model, compiled = _compiled_from_args(args)
    host, port = _parse_addr(args.listen)
    srv = socket.create_server((host, port))
    print(f"proxy for {compiled.model_digest[:16]}... on {host}:{port}")
    try:
        conn, _ = srv.accept()
        client_chan = SocketChannel(conn)
        server_chan = SocketChannel(socket.create_connection(_parse_addr(args.connect)))
        seed = (args.seed.to_bytes(16, "big") if args.seed is not None else None)
        run_proxy(compiled, client_chan, server_chan, seed=seed,
                  ot_mode=args.ot_mode)
        return 0
    finally:
        srv.close()


def cmd_selftest(args) -> int:
    """Condensed oracle-equivalence sweep over the component library plus a
    loopback protocol round trip."""
    import threading

    from . import gclib
    from .fixedpt import LayerSpec, fx_add, fx_mul, ref_network_eval
    from .garble import run_plain_garbled
    from .session import garbled_table_bytes, loopback_pair

    rng = np.random.default_rng(args.seed or 0)
    failures = []

    def check(name, cond):
        print(f"  {'ok  ' if cond else 'FAIL'} {name}")
        if not cond:
            failures.append(name)

    add = gclib.build_add()
    a = rng.integers(0, 1 << 16, 200)
    b = rng.integers(0, 1 << 16, 200)
    check("adder vs fx_add", bool(np.all(
        add.eval_plain({"a": a, "b": b})["sum"] == fx_add(a, b))))
    mult = gclib.build_mult_truncated()
    check("multiplier vs fx_mul", bool(np.all(
        mult.eval_plain({"x": a, "y": b})["prod"] == fx_mul(a, b))))
    bits = rng.integers(0, 2, (len(mult.netlist.inputs), 64)).astype(np.uint8)
    check("multiplier garbled vs plain", bool(np.array_equal(
        run_plain_garbled(mult.netlist, bits), mult.netlist.simulate(bits))))

    model = ModelDescriptor("selftest", [
        LayerSpec("FullyConnected", {"in": 6, "out": 4},
                  weights=encode_array(rng.normal(0, 0.3, (4, 6)))),
        LayerSpec("NonLinearity", {"size": 4}, activation="relu"),
        LayerSpec("FullyConnected", {"in": 4, "out": 3},
                  weights=encode_array(rng.normal(0, 0.3, (3, 4)))),
    ], (6,))
    compiled = compile_model(model, "unrolled")
    x = encode_array(rng.normal(0, 1, 6))
    ca, cb = loopback_pair()
    err = []

    def serve():
        try:
            run_server(model, compiled, cb, ot_mode="test-dealer")
        except Exception as exc:  # surfaced below
            err.append(exc)

    th = threading.Thread(target=serve)
    th.start()
    label = run_client(x, compiled, ca, seed=b"selftest", ot_mode="test-dealer")
    th.join()
    check("loopback label vs reference",
          not err and label == ref_network_eval(model, x))
    check("wire bytes = nonxor * 32",
          garbled_table_bytes(ca, "sent")
          == compiled.netlist.stats().total_nonxor * 32)
    print("selftest:", "all checks passed" if not failures
          else f"{len(failures)} FAILED")
    return 0 if not failures else 3


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcinfer", description=__doc__)
    p.add_argument("--version", action="version",
                   version=f"gcinfer {__version__} (protocol v1, {CIPHER_ID}, "
                           f"{ot.GROUP_ID})")
    p.add_argument("--log-level", default="warning",
                   choices=["debug", "info", "warning", "error"])
    p.add_argument("--seed", type=int, default=None,
                   help="deterministic seeding for test reproducibility")
    p.add_argument("--ot-mode", default="secure",
                   choices=["secure", "test-dealer"])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="lower a model into a netlist")
    c.add_argument("--model", required=True)
    c.add_argument("--mode", default="unrolled", choices=["unrolled", "folded"])
    c.add_argument("--out")
    c.add_argument("--stats", help="stats JSON path, or - for stdout")
    c.add_argument("--no-argmax", action="store_true")
    c.add_argument("--outsourced", action="store_true")
    c.set_defaults(fn=cmd_compile)

    c = sub.add_parser("stats", help="count gates in a netlist file")
    c.add_argument("--netlist", required=True)
    c.add_argument("--json", action="store_true")
    c.set_defaults(fn=cmd_stats)

    c = sub.add_parser("estimate", help="predict computation and traffic")
    c.add_argument("--netlist")
    c.add_argument("--analytic", action="store_true")
    c.add_argument("--model")
    c.add_argument("--published-costs", action="store_true",
                   help="use the published per-component counts instead of "
                        "this library's measured ones")
    c.add_argument("--bw", type=float, help="network bandwidth, bits/second")
    c.add_argument("--json", action="store_true")
    c.set_defaults(fn=cmd_estimate)

    c = sub.add_parser("preprocess", help="build the data projector")
    c.add_argument("--train", required=True, help="row-major CSV, no header")
    c.add_argument("--labels", required=True)
    c.add_argument("--gamma", type=float, default=0.3)
    c.add_argument("--patience", type=int, default=50)
    c.add_argument("--batch", type=int, default=32)
    c.add_argument("--net", help="hidden,..,out layer sizes for the trainer")
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_preprocess)

    c = sub.add_parser("prune", help="magnitude-prune a model")
    c.add_argument("--model", required=True)
    c.add_argument("--fraction", type=float)
    c.add_argument("--threshold", type=float)
    c.add_argument("--retrain-epochs", type=int, default=0)
    c.add_argument("--train")
    c.add_argument("--labels")
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_prune)

    c = sub.add_parser("serve", help="evaluator side: answer inferences")
    c.add_argument("--model", required=True)
    c.add_argument("--netlist")
    c.add_argument("--mode", default="auto", choices=["auto", "unrolled", "folded"])
    c.add_argument("--listen", required=True)
    c.add_argument("--outsourced", action="store_true")
    c.add_argument("--once", action="store_true")
    c.set_defaults(fn=cmd_serve)

    c = sub.add_parser("infer", help="data-owner side: run one inference")
    c.add_argument("--input", required=True)
    c.add_argument("--model", required=True,
                   help="public architecture (weights ignored if present)")
    c.add_argument("--netlist")
    c.add_argument("--mode", default="auto", choices=["auto", "unrolled", "folded"])
    c.add_argument("--connect", required=True)
    c.add_argument("--outsource", action="store_true")
    c.add_argument("--proxy")
    c.set_defaults(fn=cmd_infer)

    c = sub.add_parser("proxy", help="outsourcing garbler")
    c.add_argument("--model", required=True)
    c.add_argument("--netlist")
    c.add_argument("--mode", default="auto", choices=["auto", "unrolled", "folded"])
    c.add_argument("--listen", required=True)
    c.add_argument("--connect", required=True)
    c.set_defaults(fn=cmd_proxy)

    c = sub.add_parser("selftest", help="oracle-equivalence smoke suite")
    c.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage problems; the contract here is 1
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=args.log_level.upper())
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ProtocolViolation, ot.ChannelError, OSError) as exc:
        print(f"protocol abort: {exc}", file=sys.stderr)
        return 2
    except (NetlistError, ShapeMismatch, ValueError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
