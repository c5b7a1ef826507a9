"""Scrambled block Hadamard sensing matrices and DMD mask pairs.

The full operator is ``W = P_out . diag(H_B, ..., H_B) . P_in``.  ``P_in`` is
a semilocal randomizer: columns are shuffled uniformly inside consecutive
windows of ``window`` columns, then interleaved across blocks so that block
``k`` collects every ``(N/B)``-th column starting at ``k``, and finally the
blocks are put in uniformly random order.  ``P_out`` is a uniform row
permutation.  Each row of ``W`` has exactly ``B`` nonzero entries, all +1 or
-1, so ``W W^T = B I``.

For a 32x32 image with ``B = window = 32`` every block touches one randomly
chosen pixel in each image row.  The construction is an interpretation of
"semilocal randomizer", not a published recipe.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _is_pow2(n) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def hadamard(order: int) -> np.ndarray:
    """Sylvester Hadamard matrix of a power-of-two order, as int64."""
    if not _is_pow2(order):
        raise ValueError(f"Hadamard order must be a power of 2, got {order}")
    h = np.ones((1, 1), dtype=np.int64)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


def fwht_blocks(x: np.ndarray, block: int) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform of each consecutive block of ``x``.

    Natural (Sylvester) ordering; integer input stays integer.
    """
    x = np.array(x, copy=True)
    n = x.shape[0]
    if n % block:
        raise ValueError("block size must divide the vector length")
    v = x.reshape(n // block, block)
    h = 1
    while h < block:
        v = v.reshape(n // block, block // (2 * h), 2, h)
        a = v[:, :, 0, :].copy()
        b = v[:, :, 1, :]
        v[:, :, 0, :] = a + b
        v[:, :, 1, :] = a - b
        h *= 2
    return v.reshape(n)


@dataclass(frozen=True)
class BlockHadamardOperator:
    """Full ``N x N`` scrambled block Hadamard operator.

    ``(W x)[i] = (D x[col_perm])[row_perm[i]]`` with ``D`` block diagonal.
    """

    n: int
    block: int
    seed: int
    window: int
    col_perm: np.ndarray = field(repr=False)
    row_perm: np.ndarray = field(repr=False)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return fwht_blocks(np.asarray(x)[self.col_perm], self.block)[self.row_perm]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        u = np.empty_like(y)
        u[self.row_perm] = y
        v = fwht_blocks(u, self.block)
        out = np.empty_like(v)
        out[self.col_perm] = v
        return out

    @property
    def matrix(self) -> np.ndarray:
        hb = hadamard(self.block)
        d = np.kron(np.eye(self.n // self.block, dtype=np.int64), hb)
        w = np.empty_like(d)
        w[:, self.col_perm] = d[self.row_perm]
        return w


def _semilocal_permutation(n, block, window, rng):
    local = np.concatenate([rng.permutation(np.arange(s, min(s + window, n)))
                            for s in range(0, n, window)])
    nb = n // block
    j = np.arange(n)
    interleaved = local[(j % block) * nb + j // block]
    order = rng.permutation(nb)
    return interleaved.reshape(nb, block)[order].ravel()


def scrambled_block_hadamard(n: int, block: int, seed: int = 0, window: int | None = None,
                             scramble: bool = True) -> BlockHadamardOperator:
    """Build the full scrambled block Hadamard operator.

    ``window`` defaults to ``block``.  ``scramble=False`` replaces both
    permutations with the identity (testing hook).
    """
    if not _is_pow2(block):
        raise ValueError(f"block size must be a power of 2, got {block}")
    if n < 1 or n % block:
        raise ValueError(f"block size {block} must divide N={n}")
    window = block if window is None else window
    if window < 1:
        raise ValueError("window must be at least 1")
    if scramble:
        rng = np.random.default_rng([seed, 0])
        col = _semilocal_permutation(n, block, window, rng)
        row = rng.permutation(n)
    else:
        col = np.arange(n)
        row = np.arange(n)
    return BlockHadamardOperator(n, block, seed, window, col, row)


@dataclass
class SensingMatrix:
    """``M x N`` matrix of selected operator rows, entries in {-1, 0, +1}.

    ``row_ids[k]`` is the operator row behind row ``k`` (-1 when the row was
    read from disk and matches no regenerated operator row).
    """

    entries: np.ndarray
    row_ids: np.ndarray
    block_size: int
    scramble_seed: int
    scramble_window: int

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.int8)
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64)
        if self.entries.ndim != 2:
            raise ValueError("entries must be 2-D")
        if self.rows > self.cols:
            raise ValueError("sensing matrix cannot have more rows than columns")
        if not np.all(np.isin(self.entries, (-1, 0, 1))):
            raise ValueError("entries must be -1, 0 or +1")
        if len(self.row_ids) != self.rows:
            raise ValueError("one row id per row required")
        ids = self.row_ids[self.row_ids >= 0]
        if len(np.unique(ids)) != len(ids):
            raise ValueError("row ids must be distinct")

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def as_float(self) -> np.ndarray:
        return self.entries.astype(float)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.as_float() @ np.ravel(x)

    def header(self) -> str:
        return (f"SBH {self.cols} {self.block_size} {self.rows} "
                f"{self.scramble_seed} {self.scramble_window}")


def select_rows(op: BlockHadamardOperator, m: int, seed: int = 0) -> SensingMatrix:
    """Draw ``m`` distinct operator rows uniformly without replacement."""
    if not 1 <= m <= op.n:
        raise ValueError(f"M must lie in [1, {op.n}], got {m}")
    ids = np.random.default_rng([seed, 1]).choice(op.n, size=m, replace=False)
    entries = op.matrix[ids]
    return SensingMatrix(entries, ids, op.block, op.seed, op.window)


def sensing_matrix(n: int, block: int, m: int, seed: int = 0, window: int | None = None) -> SensingMatrix:
    """Scrambled operator plus row selection, both keyed on ``seed``."""
    op = scrambled_block_hadamard(n, block, seed, window)
    return select_rows(op, m, seed)


@dataclass
class MaskPair:
    """Complementary binary exposures realizing one signed row.

    ``positive - negative`` is the row; ``positive + negative`` is its support.
    """

    positive: np.ndarray
    negative: np.ndarray

    def differential(self, image: np.ndarray) -> float:
        return float((self.positive * image).sum() - (self.negative * image).sum())


def to_mask_pairs(matrix: SensingMatrix, image_dims) -> list[MaskPair]:
    """Split each row into positive/negative DMD masks, row-major ``(height, width)``."""
    h, w = image_dims
    if h * w != matrix.cols:
        raise ValueError(f"image {h}x{w} has {h * w} pixels, matrix has {matrix.cols} columns")
    pairs = []
    for row in matrix.entries:
        r = row.reshape(h, w)
        pairs.append(MaskPair((r > 0).astype(np.uint8), (r < 0).astype(np.uint8)))
    return pairs


_TOKENS = {1: "+1", -1: "-1", 0: "0"}
_VALUES = {"+1": 1, "1": 1, "-1": -1, "0": 0}


def write_matrix(matrix: SensingMatrix, path) -> None:
    lines = [matrix.header()]
    lines += [" ".join(_TOKENS[int(v)] for v in row) for row in matrix.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_matrix(path) -> SensingMatrix:
    """Parse the ``SBH`` text format and recover row ids from the operator."""
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != "SBH":
        raise ValueError(f"{path}: bad header {lines[0]!r}, expected 'SBH N B M seed window'")
    n, b, m, seed, window = (int(v) for v in head[1:])
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != m:
        raise ValueError(f"{path}: header declares {m} rows, found {len(body)}")
    entries = np.empty((m, n), dtype=np.int8)
    for k, ln in enumerate(body):
        toks = ln.split()
        if len(toks) != n:
            raise ValueError(f"{path}: row {k} has {len(toks)} entries, expected {n}")
        try:
            entries[k] = [_VALUES[t] for t in toks]
        except KeyError as exc:
            raise ValueError(f"{path}: row {k} has invalid entry {exc.args[0]!r}") from None
    ids = np.full(m, -1, dtype=np.int64)
    try:
        full = scrambled_block_hadamard(n, b, seed, window).matrix.astype(np.int8)
    except ValueError:
        full = None
    if full is not None:
        lookup = {r.tobytes(): i for i, r in enumerate(full)}
        for k, row in enumerate(entries):
            ids[k] = lookup.get(row.tobytes(), -1)
    return SensingMatrix(entries, ids, b, seed, window)
