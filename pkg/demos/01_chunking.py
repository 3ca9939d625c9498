"""Tokenizing and chunking a corpus with overlapping windows."""

from hyperrag import ChunkingConfig, Document, chunk_corpus, tokenize
from hyperrag.corpus import expected_chunk_count

text = "Sleep is regulated by two processes. The circadian rhythm sets the timing of sleep."
print(tokenize(text)[:8])  # words and punctuation are separate tokens

# a toy window so the overlap is visible
cfg = ChunkingConfig(chunk_size=8, overlap=3)
for c in chunk_corpus([Document("sleep", "", text)], cfg):
    print(c.chunk_id, c.token_count, "|", c.text)

# counts follow the closed form; overlap never crosses documents
docs = [Document(f"doc{i}", "", "word " * n) for i, n in enumerate((1200, 1201, 5000))]
cfg = ChunkingConfig()  # 1200 tokens, 100 overlap
for d in docs:
    n = len(tokenize(d.body))
    print(d.doc_id, n, "tokens ->", expected_chunk_count(n, cfg), "chunks")
print("total", len(chunk_corpus(docs, cfg)))
