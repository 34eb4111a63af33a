"""Token vocabulary: a bijection between token strings and integer ids."""

from __future__ import annotations

from collections.abc import Iterable, Sequence


class Vocab:
    """Ordered set of distinct token strings, identified by their index.

    Ids are 0..size-1 in the order the tokens were given.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if len(tokens) < 2:
            raise ValueError("vocab needs at least 2 tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocab")
        self.tokens = tokens
        self._ids = {tok: i for i, tok in enumerate(tokens)}

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocab(size={self.size})"

    def id_of(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise KeyError(f"unknown token: {token!r}") from None

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < self.size:
            raise IndexError(f"token id {token_id} out of range 0..{self.size - 1}")
        return self.tokens[token_id]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.token_of(i) for i in ids]

    def contains_ids(self, ids: Iterable[int]) -> bool:
        return all(0 <= i < self.size for i in ids)

    @classmethod
    def of_size(cls, n: int, prefix: str = "w") -> "Vocab":
        """Synthetic vocabulary of ``n`` placeholder symbols (w00, w01, ...)."""
        width = max(2, len(str(n - 1)))
        return cls([f"{prefix}{i:0{width}d}" for i in range(n)])
