"""Linear-chain CRF decoders, one per coarse feature dimension.

Each decoder scores a (previous label, current label) pair at position t as
w[prev, cur] . input_t + b[prev, cur]; a pseudo-label row (index 0 of the
first weight axis) plays the role of the sequence start, and there is no
end factor. The partition function runs in log space; Viterbi and posterior
marginals run on detached arrays since decoding needs no gradients.
"""

from __future__ import annotations

import io

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, SchemaError


class CrfLayer:
    """Pairwise-scored chain decoder over one label set.

    Weights have shape (n_labels + 1, n_labels, input_dim); row 0 of the
    first axis scores transitions out of the sequence start.
    """

    def __init__(self, name: str, labels: list[str], input_dim: int, rng, dtype):
        if not labels:
            raise DimensionError(f"decoder {name!r} has an empty label set")
        self.name = name
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        self.n = len(self.labels)
        self.input_dim = input_dim
        self.w = ad.init_weight(rng, (self.n + 1, self.n, input_dim), dtype)
        self.b = ad.init_zeros((self.n + 1, self.n), dtype)

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}

    # -- scoring ------------------------------------------------------------

    def pair_score(self, prev: int | None, cur: int, h: Tensor) -> Tensor:
        """Score of (prev -> cur) at one position; prev=None is the start."""
        if not (prev is None or 0 <= prev < self.n) or not 0 <= cur < self.n:
            raise DimensionError(
                f"label pair ({prev}, {cur}) outside decoder {self.name!r} of size {self.n}"
            )
        prow = 0 if prev is None else prev + 1
        w2 = ad.reshape(self.w, ((self.n + 1) * self.n, self.input_dim))
        w_pc = ad.row(w2, prow * self.n + cur)
        b_pc = ad.gather_flat(self.b, np.array([prow * self.n + cur]))
        return ad.dot(w_pc, h) + ad.reshape(b_pc, ())

    def scores(self, states: list[Tensor]) -> Tensor:
        """All pair scores for a sequence: (n_positions, (n_labels+1)*n_labels)."""
        h = ad.stack_rows(states)
        if h.shape[1] != self.input_dim:
            raise DimensionError(
                f"decoder {self.name!r} expects width {self.input_dim}, got {h.shape[1]}"
            )
        w2 = ad.reshape(self.w, ((self.n + 1) * self.n, self.input_dim))
        b_flat = ad.reshape(self.b, ((self.n + 1) * self.n,))
        return ad.add(ad.matmul(h, ad.transpose(w2)), b_flat)

    def label_ids(self, values: list[str]) -> list[int]:
        ids = []
        for v in values:
            if v not in self.index:
                raise SchemaError(f"label {v!r} is not in the space of {self.name!r}")
            ids.append(self.index[v])
        return ids

    # -- training objective ---------------------------------------------------

    def gold_path_score(self, score_matrix: Tensor, gold: list[int]) -> Tensor:
        """Sum of pair scores along the gold path."""
        n_pairs = (self.n + 1) * self.n
        idx = np.empty(len(gold), dtype=np.intp)
        prev_row = 0
        for t, cur in enumerate(gold):
            idx[t] = t * n_pairs + prev_row * self.n + cur
            prev_row = cur + 1
        return ad.tensor_sum(ad.gather_flat(score_matrix, idx))

    def log_partition_from_scores(self, score_matrix: Tensor, length: int) -> Tensor:
        """Forward algorithm in log space over the pair-score matrix."""
        n = self.n
        first = ad.reshape(ad.row(score_matrix, 0), (n + 1, n))
        alpha = ad.row(first, 0)
        for t in range(1, length):
            step = ad.reshape(ad.row(score_matrix, t), (n + 1, n))
            trans = ad.narrow(step, 1, n + 1)
            alpha = ad.logsumexp(ad.add(trans, ad.reshape(alpha, (n, 1))), axis=0)
        return ad.logsumexp(alpha, axis=0)

    def log_partition(self, states: list[Tensor]) -> Tensor:
        if not states:
            raise DimensionError("log_partition over an empty sequence")
        return self.log_partition_from_scores(self.scores(states), len(states))

    def nll(self, states: list[Tensor], gold_values: list[str]) -> Tensor:
        """Negative log-likelihood of the gold label sequence."""
        if len(gold_values) != len(states):
            raise DimensionError(
                f"{len(gold_values)} gold labels for {len(states)} positions"
            )
        gold = self.label_ids(gold_values)
        score_matrix = self.scores(states)
        log_z = self.log_partition_from_scores(score_matrix, len(states))
        return log_z - self.gold_path_score(score_matrix, gold)

    # -- decoding (no gradients) ----------------------------------------------

    def _score_blocks(self, states: list[Tensor]) -> np.ndarray:
        h = np.stack([s.data for s in states])
        w2 = self.w.data.reshape((self.n + 1) * self.n, self.input_dim)
        flat = h @ w2.T + self.b.data.reshape(-1)
        return flat.reshape(len(states), self.n + 1, self.n).astype(np.float64)

    def viterbi(self, states: list[Tensor]) -> tuple[list[int], float]:
        """Best-scoring path and its unnormalized log-score.

        Ties break toward the lowest label index at every argmax.
        """
        if not states:
            raise DimensionError("viterbi over an empty sequence")
        blocks = self._score_blocks(states)
        n = self.n
        delta = blocks[0, 0].copy()
        back: list[np.ndarray] = []
        for t in range(1, len(states)):
            cand = delta[:, None] + blocks[t, 1:, :]
            best_prev = cand.argmax(axis=0)
            back.append(best_prev)
            delta = cand[best_prev, np.arange(n)]
        last = int(delta.argmax())
        path = [last]
        for bp in reversed(back):
            path.append(int(bp[path[-1]]))
        path.reverse()
        return path, float(delta[last])

    def posterior_marginals(self, states: list[Tensor]) -> np.ndarray:
        """Per-position label distributions via forward-backward."""
        if not states:
            raise DimensionError("marginals over an empty sequence")
        blocks = self._score_blocks(states)
        length, n = len(states), self.n

        def lse(a, axis):
            m = a.max(axis=axis, keepdims=True)
            return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)

        log_alpha = np.empty((length, n))
        log_alpha[0] = blocks[0, 0]
        for t in range(1, length):
            log_alpha[t] = lse(log_alpha[t - 1][:, None] + blocks[t, 1:, :], axis=0)
        log_beta = np.zeros((length, n))
        for t in range(length - 2, -1, -1):
            log_beta[t] = lse(blocks[t + 1, 1:, :] + log_beta[t + 1][None, :], axis=1)
        log_z = lse(log_alpha[-1], axis=0)
        return np.exp(log_alpha + log_beta - log_z)

    def transition_text(self) -> str:
        """Tabular export of the pair biases and pair weight norms."""
        out = io.StringIO()
        names = ["<start>"] + self.labels
        header = "\t".join(["from\\to"] + self.labels)
        out.write(f"# decoder {self.name}: pair bias\n{header}\n")
        for i, row_name in enumerate(names):
            vals = "\t".join(f"{v:.6f}" for v in self.b.data[i])
            out.write(f"{row_name}\t{vals}\n")
        out.write(f"# decoder {self.name}: pair weight norm\n{header}\n")
        norms = np.linalg.norm(self.w.data, axis=2)
        for i, row_name in enumerate(names):
            vals = "\t".join(f"{v:.6f}" for v in norms[i])
            out.write(f"{row_name}\t{vals}\n")
        return out.getvalue()


class FeatureDecoderBank:
    """One CrfLayer per decoded dimension, sharing the encoder's states."""

    def __init__(self, schema, dims: list[str], input_dim: int, rng, dtype):
        missing = [d for d in dims if d not in schema.dimensions]
        if missing:
            raise SchemaError(f"decoder dimensions {missing} are not in the schema")
        self.dims = list(dims)
        self.layers = {
            dim: CrfLayer(dim, schema.labels[dim], input_dim, rng, dtype) for dim in self.dims
        }

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for dim in self.dims:
            params.update(self.layers[dim].named_parameters(f"crf.{dim}"))
        return params

    def nll(self, states: list[Tensor], gold: list[dict[str, str]]) -> Tensor:
        """Summed negative log-likelihood across all decoded dimensions."""
        total = None
        for dim in self.dims:
            values = [g[dim] for g in gold]
            term = self.layers[dim].nll(states, values)
            total = term if total is None else total + term
        return total

    def decode(self, states: list[Tensor]) -> list[dict[str, str]]:
        """Viterbi per dimension, re-assembled into per-token assignments."""
        per_dim = {}
        for dim in self.dims:
            path, _ = self.layers[dim].viterbi(states)
            per_dim[dim] = [self.layers[dim].labels[i] for i in path]
        return [{dim: per_dim[dim][t] for dim in self.dims} for t in range(len(states))]
