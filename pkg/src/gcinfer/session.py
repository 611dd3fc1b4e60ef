"""Two-party (and outsourced three-party) execution over a byte stream.

Frame format: 4-byte big-endian payload length, 1 type byte, payload.
Frames larger than 64 MiB split across consecutive frames of the same
type.  The cycle loop pipelines: the garbler prepares cycle t+1 while
cycle t's tables travel and the evaluator works on what it has, with a
bounded hand-off queue two cycles deep on each side.

Direct mode: the data owner garbles, the model owner evaluates.  The
upfront transfer gives the evaluator one label per scheduled weight bit;
tables and the garbler's own input labels then stream cycle by cycle, the
evaluator returns the output labels, and only the garbler can decode them.

Outsourced mode: a resource-limited client splits its input into two
one-time-pad shares, hands one to a proxy (who garbles, holding the share
as its private input) and the other to the model server (who feeds it in
through the transfer alongside the weights).  The circuit rebuilds the
input with free XOR gates.  The output map comes back from the proxy and
the output labels from the server, so the client alone learns the label.
"""

from __future__ import annotations

import json
import queue
import secrets
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import ot
from .compiler import CompiledCircuit
from .fixedpt import ModelDescriptor, WORD_BITS
from .garble import (CIPHER_ID, Evaluator, Garbler, InvalidLabel, TABLE_BYTES,
                     _from_blocks, _schedule, _to_blocks, decode_outputs)

PROTOCOL_VERSION = 1
MAX_FRAME = 64 * (1 << 20)

T_HELLO = 0x01
T_OT_RECEIVER = 0x02
T_OT_SENDER = 0x03
T_TABLES = 0x10
T_GARBLER_LABELS = 0x11
T_INPUT_SHARE = 0x12
T_OUTPUT_LABELS = 0x20
T_RESULT_ACK = 0x21
T_OUTPUT_MAP = 0x22
T_ABORT = 0x7F

FRAME_NAMES = {
    T_HELLO: "HELLO", T_OT_RECEIVER: "OT_RECEIVER_MSG",
    T_OT_SENDER: "OT_SENDER_MSG", T_TABLES: "TABLES",
    T_GARBLER_LABELS: "GARBLER_LABELS", T_INPUT_SHARE: "INPUT_SHARE",
    T_OUTPUT_LABELS: "OUTPUT_LABELS", T_RESULT_ACK: "RESULT_ACK",
    T_OUTPUT_MAP: "OUTPUT_MAP", T_ABORT: "ABORT",
}


class ProtocolViolation(RuntimeError):
    pass


class DigestMismatch(ProtocolViolation):
    pass


class ShareSizeMismatch(ProtocolViolation):
    pass


class ChannelError(IOError):
    pass


class SessionAborted(ProtocolViolation):
    pass


# ---------------------------------------------------------------------------
# Channels


class Channel:
    """Framed, instrumented transport over an ordered reliable byte pipe."""

    def __init__(self):
        self.sent_payload = {}
        self.recv_payload = {}
        self._recv_buf = b""

    # subclasses provide raw byte I/O
    def _write(self, data: bytes):
        raise NotImplementedError

    def _read(self, n: int) -> bytes:
        raise NotImplementedError

    def send_frame(self, ftype: int, payload: bytes):
        if len(payload) > MAX_FRAME:
            raise ChannelError("frame exceeds the 64 MiB limit; split it")
        self.sent_payload[ftype] = self.sent_payload.get(ftype, 0) + len(payload)
        self._write(struct.pack(">IB", len(payload), ftype) + payload)

    def recv_frame(self) -> tuple[int, bytes]:
        head = self._read(5)
        if len(head) < 5:
            raise ChannelError("peer closed the stream")
        length, ftype = struct.unpack(">IB", head)
        if length > MAX_FRAME:
            raise ProtocolViolation("oversized frame")
        payload = self._read(length)
        if len(payload) < length:
            raise ChannelError("truncated frame")
        if ftype not in FRAME_NAMES:
            raise ProtocolViolation(f"unknown frame type 0x{ftype:02x}")
        self.recv_payload[ftype] = self.recv_payload.get(ftype, 0) + len(payload)
        return ftype, payload

    def expect(self, ftype: int) -> bytes:
        got, payload = self.recv_frame()
        if got == T_ABORT and ftype != T_ABORT:
            raise SessionAborted(payload[1:].decode("utf-8", "replace"))
        if got != ftype:
            raise ProtocolViolation(
                f"expected {FRAME_NAMES[ftype]}, got {FRAME_NAMES.get(got, hex(got))}")
        return payload

    def abort(self, code: int, message: str):
        try:
            self.send_frame(T_ABORT, bytes([code]) + message.encode())
        except Exception:
            pass

    def close(self):
        pass


class SocketChannel(Channel):
    def __init__(self, sock):
        super().__init__()
        self.sock = sock

    def _write(self, data: bytes):
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise ChannelError(str(exc)) from exc

    def _read(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self.sock.recv(min(n - got, 1 << 20))
            except OSError as exc:
                raise ChannelError(str(exc)) from exc
            if not chunk:
                break
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class LoopbackChannel(Channel):
    """In-process pipe with an optional per-frame delay (models transfer
    time) and a transcript tap for determinism tests."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, delay: float = 0.0):
        super().__init__()
        self._inbox = inbox
        self._outbox = outbox
        self.delay = delay
        self.sent_transcript = bytearray()

    def _write(self, data: bytes):
        if self.delay:
            time.sleep(self.delay)
        self.sent_transcript += data
        self._outbox.put(data)

    def _read(self, n: int) -> bytes:
        while len(self._recv_buf) < n:
            chunk = self._inbox.get()
            if chunk is None:
                break
            self._recv_buf += chunk
        out, self._recv_buf = self._recv_buf[:n], self._recv_buf[n:]
        return out

    def close(self):
        self._outbox.put(None)


def loopback_pair(delay: float = 0.0) -> tuple[LoopbackChannel, LoopbackChannel]:
    a2b, b2a = queue.Queue(), queue.Queue()
    return (LoopbackChannel(b2a, a2b, delay), LoopbackChannel(a2b, b2a, delay))


def garbled_table_bytes(chan: Channel, direction: str = "sent") -> int:
    """Net garbled-table payload moved through a channel; each TABLES frame
    carries one 4-byte cycle header, which is excluded."""
    counters = chan.sent_payload if direction == "sent" else chan.recv_payload
    n_frames = chan.__dict__.get("_tables_frames_" + direction, 0)
    return counters.get(T_TABLES, 0) - 4 * n_frames


# ---------------------------------------------------------------------------
# Hello


@dataclass
class SessionConfig:
    role: str
    mode: str = "direct"                 # direct | outsourced
    ot_mode: str = "secure"              # secure | test-dealer
    digest: str = ""
    seed: bytes | None = None            # garbler only

    def hello_payload(self) -> bytes:
        doc = {"v": PROTOCOL_VERSION, "mode": self.mode, "ot": self.ot_mode,
               "digest": self.digest, "cipher": CIPHER_ID,
               "group": ot.DEALER_ID if self.ot_mode == "test-dealer" else ot.GROUP_ID}
        return json.dumps(doc, sort_keys=True).encode()


def _check_hello(chan: Channel, cfg: SessionConfig, payload: bytes):
    try:
        peer = json.loads(payload)
    except ValueError:
        raise ProtocolViolation("malformed HELLO") from None
    mine = json.loads(cfg.hello_payload())
    for key in ("v", "mode", "ot", "cipher", "group"):
        if peer.get(key) != mine[key]:
            chan.abort(2, f"{key} mismatch")
            raise ProtocolViolation(f"HELLO {key} mismatch: {peer.get(key)!r}")
    if peer.get("digest") != cfg.digest:
        chan.abort(1, "digest mismatch")
        raise DigestMismatch(f"peer digest {peer.get('digest')!r}")


# ---------------------------------------------------------------------------
# Garbler side (direct-mode client, outsourced-mode proxy)


def _send_tables(chan: Channel, cycle: int, tables: bytes):
    head = struct.pack(">I", cycle)
    limit = MAX_FRAME - 4
    if not tables:
        chan.send_frame(T_TABLES, head)
        _bump(chan, "sent")
        return
    for off in range(0, len(tables), limit):
        chan.send_frame(T_TABLES, head + tables[off:off + limit])
        _bump(chan, "sent")


def _bump(chan: Channel, direction: str):
    key = "_tables_frames_" + direction
    chan.__dict__[key] = chan.__dict__.get(key, 0) + 1


def _recv_tables(chan: Channel, cycle: int, expected: int) -> bytes:
    buf = b""
    while True:
        payload = chan.expect(T_TABLES)
        _bump(chan, "recv")
        (cyc,) = struct.unpack(">I", payload[:4])
        if cyc != cycle:
            raise ProtocolViolation(f"tables for cycle {cyc}, expected {cycle}")
        buf += payload[4:]
        if len(buf) >= expected:
            return buf


def _run_garbler(cfg: SessionConfig, compiled: CompiledCircuit, chan: Channel,
                 bit_of_line) -> np.ndarray:
    """Drive the garbler role; returns the received output labels."""
    net = compiled.netlist
    chan.send_frame(T_HELLO, cfg.hello_payload())
    _check_hello(chan, cfg, chan.expect(T_HELLO))

    seed = cfg.seed if cfg.seed is not None else secrets.token_bytes(16)
    garbler = Garbler(net, seed)

    # upfront transfer of every evaluator-side input label
    pairs = garbler.evaluator_label_pairs()
    batch = ot.OtBatch(pairs)
    if cfg.ot_mode == "test-dealer":
        sender = ot.DealerSender(batch)
        chan.send_frame(T_OT_SENDER, sender.respond(chan.expect(T_OT_RECEIVER)))
    else:
        sender = ot.SecureSender(batch)
        chan.send_frame(T_OT_SENDER, sender.setup_message(chan.expect(T_OT_RECEIVER)))
        chan.send_frame(T_OT_SENDER, sender.final_message(chan.expect(T_OT_RECEIVER)))

    # pipelined cycle loop: garble ahead into a two-cycle queue
    work: queue.Queue = queue.Queue(maxsize=2)
    fail: list[BaseException] = []

    def produce():
        try:
            for t in range(net.cycles):
                tables = garbler.garble_cycle(t)
                _lines, labels = garbler.garbler_active_labels(t, bit_of_line)
                parts = [struct.pack(">I", t)]
                if t == 0:
                    init = garbler.register_init_labels()
                    parts.append(struct.pack(">I", len(init)))
                    parts.append(_to_blocks(init))
                else:
                    parts.append(struct.pack(">I", 0))
                parts.append(_to_blocks(labels))
                work.put((t, tables, b"".join(parts)))
            work.put(None)
        except BaseException as exc:  # surfaced on the main thread
            fail.append(exc)
            work.put(None)

    worker = threading.Thread(target=produce, name="garbler-engine", daemon=True)
    worker.start()
    while True:
        item = work.get()
        if item is None:
            break
        t, tables, label_payload = item
        _send_tables(chan, t, tables)
        chan.send_frame(T_GARBLER_LABELS, label_payload)
    worker.join()
    if fail:
        chan.abort(2, "garbling failed")
        raise fail[0]

    received = _from_blocks(chan.expect(T_OUTPUT_LABELS))
    bits = decode_outputs(garbler.output_pairs, received)
    chan.send_frame(T_RESULT_ACK, b"\x00")
    return bits, garbler


def _bits_to_label(bits: np.ndarray) -> int:
    return int(sum(int(v) << k for k, v in enumerate(np.asarray(bits).reshape(-1))))


def run_client(x_raw, compiled: CompiledCircuit, chan: Channel, *,
               seed: bytes | None = None, ot_mode: str = "secure") -> int:
    """Direct mode, data-owner side: garble, stream, decode the label."""
    if compiled.outsourced:
        raise ProtocolViolation("direct client needs a direct-mode circuit")
    cfg = SessionConfig(role="client", ot_mode=ot_mode,
                        digest=compiled.model_digest, seed=seed)
    data_bits = compiled.data_bit_values(x_raw)
    line_bit = compiled.garbler_line_bit

    bits, _g = _run_garbler(cfg, compiled, chan,
                            lambda line: int(data_bits[line_bit[line]]))
    return _bits_to_label(bits)


# ---------------------------------------------------------------------------
# Evaluator side (the model owner)


def _run_evaluator(cfg: SessionConfig, compiled: CompiledCircuit, chan: Channel,
                   choice_bits: np.ndarray) -> np.ndarray:
    net = compiled.netlist
    _check_hello(chan, cfg, chan.expect(T_HELLO))
    chan.send_frame(T_HELLO, cfg.hello_payload())

    if cfg.ot_mode == "test-dealer":
        recv = ot.DealerReceiver(choice_bits)
        chan.send_frame(T_OT_RECEIVER, recv.first_message())
        labels = recv.finish(chan.expect(T_OT_SENDER))
    else:
        recv = ot.SecureReceiver(choice_bits)
        chan.send_frame(T_OT_RECEIVER, recv.first_message())
        setup = chan.expect(T_OT_SENDER)
        chan.send_frame(T_OT_RECEIVER, recv.respond(setup))
        labels = recv.finish(chan.expect(T_OT_SENDER))

    sched = _schedule(net)
    evaluator = Evaluator(net)
    evaluator.set_line_labels(sched.evaluator_lines, labels[:, None, :])
    n_tables_bytes = sched.n_tables * TABLE_BYTES

    inbox: queue.Queue = queue.Queue(maxsize=4)
    fail: list[BaseException] = []

    def pump():
        try:
            for t in range(net.cycles):
                tables = _recv_tables(chan, t, n_tables_bytes)
                label_payload = chan.expect(T_GARBLER_LABELS)
                inbox.put((t, tables, label_payload))
            inbox.put(None)
        except BaseException as exc:
            fail.append(exc)
            inbox.put(None)

    pump_thread = threading.Thread(target=pump, name="evaluator-io", daemon=True)
    pump_thread.start()
    garbler_lines = [ln[sched.garbler_side[ln]] for ln in sched.lines_by_cycle]
    while True:
        item = inbox.get()
        if item is None:
            break
        t, tables, payload = item
        (cyc,) = struct.unpack(">I", payload[:4])
        if cyc != t:
            raise ProtocolViolation("labels out of order")
        (n_init,) = struct.unpack(">I", payload[4:8])
        off = 8
        if n_init:
            init = _from_blocks(payload[off:off + 16 * n_init])
            evaluator.set_register_init_labels(init[:, None, :])
            off += 16 * n_init
        labs = _from_blocks(payload[off:])
        lines = garbler_lines[t]
        if len(labs) != len(lines):
            raise ProtocolViolation("garbler label count mismatch")
        evaluator.set_line_labels(lines, labs[:, None, :])
        evaluator.eval_cycle(t, tables)
    pump_thread.join()
    if fail:
        raise fail[0]
    return evaluator.output_labels()


def run_server(model: ModelDescriptor, compiled: CompiledCircuit, chan: Channel, *,
               ot_mode: str = "secure", client_chan: Channel | None = None):
    """Model-owner side: receive weight labels through the transfer,
    evaluate, and return output labels (to the garbler, or to the weak
    client when outsourced)."""
    mode = "outsourced" if compiled.outsourced else "direct"
    cfg = SessionConfig(role="server", mode=mode, ot_mode=ot_mode,
                        digest=compiled.model_digest)
    share_bits = None
    if compiled.outsourced:
        if client_chan is None:
            raise ProtocolViolation("outsourced server needs the client channel")
        _check_hello(client_chan, cfg, client_chan.expect(T_HELLO))
        client_chan.send_frame(T_HELLO, cfg.hello_payload())
        share_bits = _unpack_bits(client_chan.expect(T_INPUT_SHARE),
                                  compiled.n_data_bits)
    choice = compiled.evaluator_choice_bits(model, share_bits)
    out_labels = _run_evaluator(cfg, compiled, chan, choice)
    final = _to_blocks(out_labels[:, 0, :])
    if compiled.outsourced:
        # release the proxy first: it must publish the output map to the
        # client before the client can decode and acknowledge anyone
        chan.send_frame(T_OUTPUT_LABELS, b"")
        client_chan.send_frame(T_OUTPUT_LABELS, final)
        client_chan.expect(T_RESULT_ACK)
        chan.expect(T_RESULT_ACK)
    else:
        chan.send_frame(T_OUTPUT_LABELS, final)
        chan.expect(T_RESULT_ACK)


# ---------------------------------------------------------------------------
# Outsourced roles


def _pack_bits(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    return struct.pack(">I", len(bits)) + bytes(np.packbits(bits, bitorder="little"))


def _unpack_bits(payload: bytes, expect: int) -> np.ndarray:
    (n,) = struct.unpack(">I", payload[:4])
    if n != expect:
        raise ShareSizeMismatch(f"share carries {n} bits, circuit needs {expect}")
    return np.unpackbits(np.frombuffer(payload[4:], dtype=np.uint8),
                         bitorder="little")[:n].astype(np.uint8)


def run_proxy(compiled: CompiledCircuit, client_chan: Channel,
              server_chan: Channel, *, seed: bytes | None = None,
              ot_mode: str = "secure"):
    """Outsourcing garbler: holds one input share as its own private input,
    runs the standard garbler protocol against the server, and releases the
    output map to the weak client (never seeing the output labels)."""
    if not compiled.outsourced:
        raise ProtocolViolation("proxy needs an outsourced-mode circuit")
    cfg = SessionConfig(role="proxy", mode="outsourced", ot_mode=ot_mode,
                        digest=compiled.model_digest, seed=seed)
    _check_hello(client_chan, cfg, client_chan.expect(T_HELLO))
    client_chan.send_frame(T_HELLO, cfg.hello_payload())
    share = _unpack_bits(client_chan.expect(T_INPUT_SHARE), compiled.n_data_bits)
    line_bit = compiled.garbler_line_bit

    # same engine as the direct client, but the final labels go elsewhere:
    # the server returns an empty OUTPUT_LABELS on this channel and sends
    # the real ones straight to the client
    net = compiled.netlist
    server_chan.send_frame(T_HELLO, cfg.hello_payload())
    _check_hello(server_chan, cfg, server_chan.expect(T_HELLO))
    garbler = Garbler(net, seed if seed is not None else secrets.token_bytes(16))
    pairs = garbler.evaluator_label_pairs()
    batch = ot.OtBatch(pairs)
    if ot_mode == "test-dealer":
        sender = ot.DealerSender(batch)
        server_chan.send_frame(T_OT_SENDER, sender.respond(server_chan.expect(T_OT_RECEIVER)))
    else:
        sender = ot.SecureSender(batch)
        server_chan.send_frame(T_OT_SENDER,
                               sender.setup_message(server_chan.expect(T_OT_RECEIVER)))
        server_chan.send_frame(T_OT_SENDER,
                               sender.final_message(server_chan.expect(T_OT_RECEIVER)))
    for t in range(net.cycles):
        tables = garbler.garble_cycle(t)
        _lines, labels = garbler.garbler_active_labels(
            t, lambda line: int(share[line_bit[line]]))
        _send_tables(server_chan, t, tables)
        parts = [struct.pack(">I", t)]
        init = garbler.register_init_labels() if t == 0 else np.zeros((0, 2), np.uint64)
        parts.append(struct.pack(">I", len(init)))
        parts.append(_to_blocks(init))
        parts.append(_to_blocks(labels))
        server_chan.send_frame(T_GARBLER_LABELS, b"".join(parts))
    server_chan.expect(T_OUTPUT_LABELS)          # empty: labels went to the client
    server_chan.send_frame(T_RESULT_ACK, b"\x00")
    client_chan.send_frame(T_OUTPUT_MAP, _to_blocks(garbler.output_pairs))
    client_chan.expect(T_RESULT_ACK)


def run_outsourced(x_raw, compiled: CompiledCircuit, proxy_chan: Channel,
                   server_chan: Channel, *, ot_mode: str = "secure",
                   rng=None) -> int:
    """Weak-client role: split the input into XOR shares, hand them out,
    then decode the label from the proxy's map and the server's labels."""
    if not compiled.outsourced:
        raise ProtocolViolation("outsourcing needs an outsourced-mode circuit")
    cfg = SessionConfig(role="outsourcing-client", mode="outsourced",
                        ot_mode=ot_mode, digest=compiled.model_digest)
    data_bits = compiled.data_bit_values(x_raw)
    if rng is None:
        share = np.frombuffer(secrets.token_bytes(len(data_bits)), dtype=np.uint8) & 1
    else:
        share = rng.integers(0, 2, len(data_bits)).astype(np.uint8)
    masked = data_bits ^ share

    proxy_chan.send_frame(T_HELLO, cfg.hello_payload())
    _check_hello(proxy_chan, cfg, proxy_chan.expect(T_HELLO))
    proxy_chan.send_frame(T_INPUT_SHARE, _pack_bits(share))

    server_chan.send_frame(T_HELLO, cfg.hello_payload())
    _check_hello(server_chan, cfg, server_chan.expect(T_HELLO))
    server_chan.send_frame(T_INPUT_SHARE, _pack_bits(masked))

    labels = _from_blocks(server_chan.expect(T_OUTPUT_LABELS))
    pair_map = _from_blocks(proxy_chan.expect(T_OUTPUT_MAP)).reshape(-1, 2, 2)
    bits = decode_outputs(pair_map, labels)
    server_chan.send_frame(T_RESULT_ACK, b"\x00")
    proxy_chan.send_frame(T_RESULT_ACK, b"\x00")
    return _bits_to_label(bits)
