"""The same question under different knowledge-source masks.

A mask has three bits: source chunks, low-order edges, high-order edges.
"""

import tempfile
from pathlib import Path

from hyperrag import MODES, ModeMask, Retriever, Workspace, ingest, mock_gateway
from hyperrag.config import FIXTURES_ROOT

fixture = FIXTURES_ROOT / "neurology"
workdir = Path(tempfile.mkdtemp()) / "kb"
ingest(fixture, workdir, mock_gateway(fixture), include_timing=False)

retriever = Retriever(Workspace.load(workdir), mock_gateway(fixture))
question = "How do neurologic lesions relate to hyperventilation?"

kw = retriever.extract_keywords(question)
print("entity keywords:", kw.entity_keywords)
print("correlation keywords:", kw.correlation_keywords)

for label in ("llm", "rag", "graph", "hyper", "hyper-lite"):
    ans = retriever.answer(question, MODES[label])
    sections = [k for k, _ in ans.context.sections]
    print(f"{ans.mask.label:9s} {label:10s} tokens={ans.context.token_total:4d} queries={ans.vector_queries} {sections}")

# structure only, no source text
ans = retriever.answer(question, ModeMask.from_bits("011"))
print(ans.context.render())

# lite keeps the high-order edge through vertex diffusion, without searching edges
lite = retriever.answer(question, MODES["hyper-lite"])
print([k for k in lite.bundle.e_more], lite.vector_queries["hyperedges"])
