"""Tokenization, the shared vocabulary, and per-example extended ids."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

PAD, UNK, SOS, EOS, SEP, CTX, TURN = range(7)
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[SOS]", "[EOS]", "[SEP]", "[CTX]", "[TURN]")
NUM_SPECIALS = len(SPECIAL_TOKENS)

TASK_PREFIX = "query rewrite:"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


def word_token_count(text: str) -> int:
    """Number of word tokens, punctuation excluded."""
    return sum(1 for t in tokenize(text) if re.search(r"\w", t))


class Vocabulary:
    """Bidirectional token/id mapping with reserved specials at ids 0..6."""

    def __init__(self, tokens: Sequence[str]):
        self.id_to_token: list[str] = list(SPECIAL_TOKENS) + list(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def token_of(self, idx: int) -> str:
        return self.id_to_token[idx]


def build_vocab(conversations, min_count: int = 1) -> Vocabulary:
    """Count tokens over queries, answers, and rewrites; keep those with
    frequency >= min_count, ordered by descending frequency then alphabetically."""
    counts: Counter[str] = Counter()
    for conv in conversations:
        for turn in conv.turns:
            for text in (turn.query, turn.answer, turn.rewrite):
                counts.update(tokenize(text))
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


@dataclass
class ModelInput:
    """The assembled encoder-side token sequence for one rewrite example.

    ``token_ids`` uses per-example extended ids (>= len(vocab)) for
    out-of-vocabulary input tokens so they stay copyable; ``sep_index`` is
    the position of [SEP], and positions strictly before it form the
    copyable span.
    """

    token_ids: list[int]
    tokens: list[str]
    sep_index: int
    ext_vocab: list[str] = field(default_factory=list)
    dropped_turns: int = 0

    @property
    def length(self) -> int:
        return len(self.token_ids)

    def extended_size(self, base: int) -> int:
        return base + len(self.ext_vocab)


def build_model_input(
    vocab: Vocabulary,
    history: Sequence[tuple[str, str]],
    query: str,
    max_text_len: int,
) -> ModelInput:
    """Assemble `query rewrite: u_1 [TURN] u_2 ... [CTX] q [SEP]` ids.

    Over-length inputs drop the oldest history turns first; the current
    query is never truncated. The number of dropped turns is recorded.
    """
    prefix = tokenize(TASK_PREFIX)
    query_toks = tokenize(query)
    dropped = 0
    kept = list(history)
    while True:
        utterances: list[list[str]] = []
        for q, a in kept:
            utterances.append(tokenize(q))
            utterances.append(tokenize(a))
        length = len(prefix) + len(query_toks) + 2  # [CTX] and [SEP]
        length += sum(len(u) for u in utterances)
        if utterances:
            length += len(utterances) - 1  # [TURN] separators
        if length <= max_text_len or not kept:
            break
        kept.pop(0)
        dropped += 1
    if length > max_text_len:
        raise ValueError(
            f"query alone exceeds max_text_len ({length} > {max_text_len})"
        )

    tokens: list[str] = list(prefix)
    for i, u in enumerate(utterances):
        if i > 0:
            tokens.append(SPECIAL_TOKENS[TURN])
        tokens.extend(u)
    tokens.append(SPECIAL_TOKENS[CTX])
    tokens.extend(query_toks)
    tokens.append(SPECIAL_TOKENS[SEP])

    ext_vocab: list[str] = []
    ext_ids: dict[str, int] = {}
    ids: list[int] = []
    base = len(vocab)
    for tok in tokens:
        idx = vocab.token_to_id.get(tok)
        if idx is None:
            if tok not in ext_ids:
                ext_ids[tok] = base + len(ext_vocab)
                ext_vocab.append(tok)
            idx = ext_ids[tok]
        ids.append(idx)
    return ModelInput(
        token_ids=ids,
        tokens=tokens,
        sep_index=len(ids) - 1,
        ext_vocab=ext_vocab,
        dropped_turns=dropped,
    )


def encode_target(
    vocab: Vocabulary,
    rewrite: str,
    ext_vocab: Sequence[str],
    copyable: bool = True,
) -> list[int]:
    """Gold rewrite ids wrapped in [SOS]..[EOS].

    Out-of-vocabulary gold tokens map to their extended id when the token is
    copyable from the input, otherwise to [UNK]. With ``copyable=False``
    (no-pointer ablation) every OOV token becomes [UNK].
    """
    ext_index = {t: len(vocab) + i for i, t in enumerate(ext_vocab)} if copyable else {}
    ids = [SOS]
    for tok in tokenize(rewrite):
        idx = vocab.token_to_id.get(tok)
        if idx is None:
            idx = ext_index.get(tok, UNK)
        ids.append(idx)
    ids.append(EOS)
    return ids


def resolve_tokens(
    vocab: Vocabulary, ext_vocab: Sequence[str], ids: Iterable[int]
) -> list[str]:
    """Map generated ids back to surface tokens, dropping specials."""
    out: list[str] = []
    base = len(vocab)
    for idx in ids:
        if idx < NUM_SPECIALS:
            continue
        out.append(vocab.id_to_token[idx] if idx < base else ext_vocab[idx - base])
    return out
