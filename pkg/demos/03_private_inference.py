"""Full two-party inference in one process over a loopback pipe.

The client holds an input vector and garbles; the server holds the weights
and evaluates, learning its weight labels through the oblivious transfer.
Only the client decodes the class index.  The instrumented channel confirms
the traffic equals the cost model's prediction to the byte.
"""

import pathlib
import threading

import numpy as np

from gcinfer import session
from gcinfer.compiler import compile_model
from gcinfer.fixedpt import encode_array, load_model, ref_network_eval

fixtures = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
model = load_model(fixtures / "desk64.json")
compiled = compile_model(model, "unrolled")

rng = np.random.default_rng(0)
x = encode_array(rng.normal(0, 1.0, 64))

client_chan, server_chan = session.loopback_pair()
server = threading.Thread(
    target=session.run_server,
    args=(model, compiled, server_chan),
    kwargs=dict(ot_mode="test-dealer"))   # dealer mode: fast, NOT private
server.start()
label = session.run_client(x, compiled, client_chan, seed=b"demo",
                           ot_mode="test-dealer")
server.join()

print(f"protocol label: {label}")
print(f"reference label: {ref_network_eval(model, x)}")
tables = session.garbled_table_bytes(client_chan, "sent")
print(f"garbled-table traffic: {tables:,} bytes "
      f"(= {compiled.netlist.stats().total_nonxor:,} AND gates x 32)")

# swap ot_mode to "secure" for the real Diffie-Hellman transfer; it is a
# few seconds slower at this size and byte-for-byte identical afterwards
