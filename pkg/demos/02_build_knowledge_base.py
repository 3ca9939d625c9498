"""Building a hypergraph knowledge base from the bundled neurology fixture.

Runs fully offline: the mock model reads its replies from the fixture
lexicon, and embeddings come from the hash embedder.
"""

import tempfile
from pathlib import Path

from hyperrag import Workspace, ingest, mock_gateway
from hyperrag.config import FIXTURES_ROOT

fixture = FIXTURES_ROOT / "neurology"
workdir = Path(tempfile.mkdtemp()) / "kb"

report = ingest(fixture, workdir, mock_gateway(fixture), include_timing=False)
print(report.to_dict(False))

ws = Workspace.load(workdir)
kb = ws.kb
print(sorted(kb.vertices))

# pairwise relations are low-order edges, larger groups are high-order
for key, edge in sorted(kb.hyperedges.items()):
    print(edge.order_class, edge.arity, key, f"strength={edge.strength:g}")
    print("   ", edge.description)

# incidence: every edge touching a vertex
for e in kb.incident_edges("NEUROLOGIC LESIONS"):
    print("NEUROLOGIC LESIONS is in", e.key)

print(sorted(p.name for p in workdir.iterdir()))
