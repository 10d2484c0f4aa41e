"""Text encoders behind a single `encode(texts) -> float32 matrix` interface.

Two families are supported by model id:

- "hashgram:<dim>" -- a dependency-free deterministic encoder hashing
  tokens and token bigrams into <dim> signed buckets (L2-normalized,
  never the zero vector). Useful for tests and air-gapped runs.
- anything else -- loaded as a sentence-transformers model id.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashGramEncoder:
    """Deterministic feature-hashing encoder over tokens and bigrams."""

    def __init__(self, dim: int = 256):
        if dim < 2:
            raise ValueError("hashgram dimension must be >= 2")
        self.dim = dim

    def _features(self, text: str):
        toks = _TOKEN_RE.findall(text.lower())
        yield from toks
        for a, b in zip(toks, toks[1:]):
            yield f"{a}\x1f{b}"

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            # constant bias bucket keeps empty/unseen text off the zero vector
            out[i, 0] = 0.25
            for feat in self._features(text):
                digest = hashlib.sha1(feat.encode("utf-8")).digest()
                bucket = int.from_bytes(digest[:4], "big") % self.dim
                sign = 1.0 if digest[4] % 2 == 0 else -1.0
                out[i, bucket] += sign
            norm = np.linalg.norm(out[i])
            out[i] /= norm
        return out.astype(np.float32)


class SentenceTransformerEncoder:
    """Wrapper around a pretrained sentence-transformers model."""

    def __init__(self, model_id: str, batch_size: int = 32):
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(model_id)
        self.batch_size = batch_size
        self.dim = int(self.model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str]) -> np.ndarray:
        return np.asarray(
            self.model.encode(
                texts,
                batch_size=self.batch_size,
                convert_to_numpy=True,
                show_progress_bar=False,
            ),
            dtype=np.float32,
        )


def get_encoder(model_id: str, batch_size: int = 32):
    if model_id.startswith("hashgram:"):
        return HashGramEncoder(dim=int(model_id.split(":", 1)[1]))
    return SentenceTransformerEncoder(model_id, batch_size=batch_size)
