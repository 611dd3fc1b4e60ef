"""Outsourcing for a weak client: one-time-pad shares to two servers.

The client only samples a random string and XORs it into its input: the
proxy garbles with the pad as its private input, the model server feeds the
masked input through the oblivious transfer next to its weights, and the
circuit re-joins the shares with free XOR gates.  The label decodes only at
the client, who holds the proxy's output map and the server's output
labels.  Nobody else sees both.
"""

import pathlib
import threading

import numpy as np

from gcinfer import session
from gcinfer.compiler import compile_model
from gcinfer.fixedpt import encode_array, load_model, ref_network_eval

fixtures = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
model = load_model(fixtures / "desk64.json")

direct = compile_model(model, "unrolled")
shared = compile_model(model, "unrolled", outsourced=True)
print(f"share-recombination layer: "
      f"+{shared.netlist.stats().xor - direct.netlist.stats().xor} XOR, "
      f"+{shared.netlist.stats().nonxor - direct.netlist.stats().nonxor} non-XOR "
      f"(free under garbling)")

x = encode_array(np.random.default_rng(7).normal(0, 1.0, 64))

cp_client, cp_proxy = session.loopback_pair()   # client <-> proxy
cs_client, cs_server = session.loopback_pair()  # client <-> server
ps_proxy, ps_server = session.loopback_pair()   # proxy  <-> server

threads = [
    threading.Thread(target=session.run_proxy,
                     args=(shared, cp_proxy, ps_proxy),
                     kwargs=dict(seed=b"proxy", ot_mode="test-dealer")),
    threading.Thread(target=session.run_server,
                     args=(model, shared, ps_server),
                     kwargs=dict(ot_mode="test-dealer",
                                 client_chan=cs_server)),
]
for t in threads:
    t.start()
label = session.run_outsourced(x, shared, cp_client, cs_client,
                               ot_mode="test-dealer",
                               rng=np.random.default_rng(99))
for t in threads:
    t.join()

print(f"outsourced label: {label}   reference: {ref_network_eval(model, x)}")
