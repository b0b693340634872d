"""Byte-level password tokenizer.

Every raw byte value b maps to token id b, so any leak line is encodable
with no out-of-vocabulary case. Two sentinels delimit each password:
BOS (id 256) opens the sequence, EOS (id 257) closes it. Vocabulary size
is therefore fixed at 258.

`Vocab` also supports restricted alphabets (a subset of byte values) for
tiny experimental models; the default instance is the full byte range.
"""

from __future__ import annotations

from typing import List, Sequence

from .errors import LengthExceeded, Malformed

FULL_ALPHABET = bytes(range(256))


class Vocab:
    """Mapping between byte values and token ids, plus the two sentinels.

    With the default alphabet, ids 0..255 mirror raw byte values and
    BOS/EOS sit at 256/257. A restricted alphabet keeps the same layout
    over its own bytes: byte `alphabet[i]` maps to id i, sentinels follow.
    """

    def __init__(self, alphabet: bytes = FULL_ALPHABET):
        if len(alphabet) != len(set(alphabet)):
            raise ValueError("alphabet bytes must be distinct")
        if not alphabet:
            raise ValueError("alphabet must be non-empty")
        self.alphabet = bytes(alphabet)
        self.size = len(alphabet) + 2
        self.bos = len(alphabet)
        self.eos = len(alphabet) + 1
        self._byte_to_id = {b: i for i, b in enumerate(alphabet)}

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and other.alphabet == self.alphabet

    def __repr__(self) -> str:
        return f"Vocab(|alphabet|={len(self.alphabet)}, size={self.size})"

    def encode(self, password: bytes, max_len: int) -> List[int]:
        """[BOS] + one id per byte + [EOS]; length is |password| + 2."""
        if len(password) > max_len:
            raise LengthExceeded(
                f"password is {len(password)} bytes, limit is {max_len}"
            )
        try:
            body = [self._byte_to_id[b] for b in password]
        except KeyError as e:
            raise Malformed(f"byte {e.args[0]} not in model alphabet") from None
        return [self.bos] + body + [self.eos]

    def decode(self, tokens: Sequence[int]) -> bytes:
        """Inverse of encode; rejects misplaced sentinels and bad ids."""
        if len(tokens) < 2 or tokens[0] != self.bos or tokens[-1] != self.eos:
            raise Malformed("token sequence must be [BOS, ..., EOS]")
        interior = tokens[1:-1]
        if any(t < 0 or t >= self.bos for t in interior):
            raise Malformed("interior token id outside the byte range")
        return bytes(self.alphabet[t] for t in interior)


#: The password vocabulary: 256 byte values + BOS + EOS = 258 ids.
DEFAULT_VOCAB = Vocab()

BOS = DEFAULT_VOCAB.bos  # 256
EOS = DEFAULT_VOCAB.eos  # 257
VOCAB_SIZE = DEFAULT_VOCAB.size  # 258


def encode(password: bytes, max_len: int) -> List[int]:
    """Encode a password under the default 258-token vocabulary."""
    return DEFAULT_VOCAB.encode(password, max_len)


def decode(tokens: Sequence[int]) -> bytes:
    """Decode a well-formed token sequence back to password bytes."""
    return DEFAULT_VOCAB.decode(tokens)
