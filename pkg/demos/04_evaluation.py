"""Generating questions, scoring answers and comparing two modes."""

import logging
import tempfile
from pathlib import Path

from hyperrag import MODES, Retriever, Workspace, aggregate, generate_questions, ingest, mock_gateway
from hyperrag.corpus import ChunkingConfig
from hyperrag.evaluation import score_response, select_better

logging.basicConfig(level=logging.WARNING)

root = Path(tempfile.mkdtemp())
corpus = root / "corpus"
corpus.mkdir()
sentences = [
    "The suprachiasmatic nucleus sets the circadian rhythm and signals the pineal gland.",
    "Melatonin from the pineal gland rises in darkness and promotes sleep onset.",
    "Adenosine accumulates during waking and increases sleep pressure.",
    "The ventrolateral preoptic nucleus inhibits arousal centres in the brainstem.",
    "Orexin neurons in the hypothalamus stabilise wakefulness.",
]
(corpus / "sleep.txt").write_text(" ".join(sentences * 6))

gw = mock_gateway()
ingest(corpus, root / "kb", gw, chunking=ChunkingConfig(40, 5), include_timing=False)
ws = Workspace.load(root / "kb")
questions = generate_questions(ws.chunks, gw, n=4, stage=2, seed=0)
for q in questions:
    print(q.question_id, q.origin_chunk_id, q.text)

retriever = Retriever(ws, gw)
scores, votes = [], []
for q in questions:
    plain = retriever.answer(q.text, MODES["llm"]).response
    full = retriever.answer(q.text, MODES["hyper"]).response
    card = score_response(gw, q.text, full, ws.chunks[q.origin_chunk_id].text)
    scores.append(card)
    votes.append(select_better(gw, q.text, plain, full))  # answer order is swapped internally
    print(q.question_id, f"overall={card.overall:.1f}", votes[-1].overall_winner, card.diagnostics)

print(aggregate(scores))
print(aggregate(votes))
