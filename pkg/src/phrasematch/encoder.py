"""Gated recurrent unit and phrase encoding over the rotation layout.

The cell uses the row-vector convention with no bias terms:

    z   = sigmoid(x_t U_z + s_prev W_z)
    r   = sigmoid(x_t U_r + s_prev W_r)
    h_t = tanh(x_t U_h + (s_prev o r) W_h)
    s_t = (1 - z) o h_t + z o s_prev

One parameter set is shared across every rotation row of a sentence pair,
so all phrase representations live in the same space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import numcore as nc
from .numcore import ContractError, Node, Parameter, Tape
from .phrasebank import PhraseSequence, Sentence, enumerate_phrases

INIT_RANGE = 0.01  # uniform weight-init half-width, same range as unknown words


class EmbeddingSource(Protocol):
    def vector(self, token: str) -> np.ndarray: ...


@dataclass
class GruParams:
    """The six weight matrices of one GRU layer."""
    u_z: Parameter
    u_r: Parameter
    u_h: Parameter
    w_z: Parameter
    w_r: Parameter
    w_h: Parameter
    input_dim: int
    hidden_dim: int

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator,
               name_prefix: str, init_range: float = INIT_RANGE) -> "GruParams":
        def mat(rows, cols, name):
            return Parameter(rng.uniform(-init_range, init_range, (rows, cols)),
                             f"{name_prefix}.{name}")
        return cls(
            u_z=mat(input_dim, hidden_dim, "u_z"),
            u_r=mat(input_dim, hidden_dim, "u_r"),
            u_h=mat(input_dim, hidden_dim, "u_h"),
            w_z=mat(hidden_dim, hidden_dim, "w_z"),
            w_r=mat(hidden_dim, hidden_dim, "w_r"),
            w_h=mat(hidden_dim, hidden_dim, "w_h"),
            input_dim=input_dim,
            hidden_dim=hidden_dim,
        )

    @property
    def params(self) -> list[Parameter]:
        return [self.u_z, self.u_r, self.u_h, self.w_z, self.w_r, self.w_h]

    @property
    def hidden_to_hidden(self) -> list[Parameter]:
        """The matrices whose rows the diversity regularizer decorrelates."""
        return [self.w_z, self.w_r, self.w_h]


@dataclass
class PhraseEncoding:
    """One representation row per phrase, in reformatted order."""
    sequence: PhraseSequence
    matrix: Node  # len(sequence) x hidden_dim

    def __len__(self) -> int:
        return len(self.sequence)


def gru_step(p: GruParams, x_t: Node, s_prev: Node, tape: Tape | None = None) -> Node:
    """One cell update; returns the next hidden state row."""
    z = nc.sigmoid(nc.add(nc.matmul(x_t, p.u_z, tape),
                          nc.matmul(s_prev, p.w_z, tape), tape), tape)
    r = nc.sigmoid(nc.add(nc.matmul(x_t, p.u_r, tape),
                          nc.matmul(s_prev, p.w_r, tape), tape), tape)
    h = nc.tanh(nc.add(nc.matmul(x_t, p.u_h, tape),
                       nc.matmul(nc.hadamard(s_prev, r, tape), p.w_h, tape),
                       tape), tape)
    return nc.add(nc.hadamard(nc.one_minus(z, tape), h, tape),
                  nc.hadamard(z, s_prev, tape), tape)


def zero_state(hidden_dim: int) -> Node:
    return Node(np.zeros((1, hidden_dim)))


def encode_sequence(p: GruParams, xs: Sequence[Node],
                    tape: Tape | None = None) -> list[Node]:
    """Run the cell over xs from a zero state; returns all hidden states."""
    if len(xs) == 0:
        raise ContractError("cannot encode an empty sequence")
    states = []
    s = zero_state(p.hidden_dim)
    for x in xs:
        s = gru_step(p, x, s, tape)
        states.append(s)
    return states


def embed_tokens(s: Sentence, emb: EmbeddingSource) -> list[Node]:
    return [Node(np.asarray(emb.vector(tok), dtype=np.float64).reshape(1, -1))
            for tok in s.tokens]


def encode_phrases(p: GruParams, s: Sentence, emb: EmbeddingSource,
                   l_max: int, tape: Tape | None = None) -> PhraseEncoding:
    """Representations for every phrase of s, in reformatted order.

    Row r of the rotation layout starts a fresh zero-state run at token r;
    its state after c steps represents the span (start=r, len=c). Wrap-around
    cells are never computed, so each row runs at most min(l_max, n - r)
    steps and every retained state equals a direct encoding of its span.
    """
    seq = enumerate_phrases(s, l_max)
    xs = embed_tokens(s, emb)
    n = len(s)
    by_cell: dict[tuple[int, int], Node] = {}
    for row in range(n):
        state = zero_state(p.hidden_dim)
        for col in range(1, min(l_max, n - row) + 1):
            state = gru_step(p, xs[row + col - 1], state, tape)
            by_cell[(row, col)] = state
    ordered = [by_cell[(sp.start, sp.len)] for sp in seq.spans]
    return PhraseEncoding(sequence=seq, matrix=nc.vstack(ordered, tape))
