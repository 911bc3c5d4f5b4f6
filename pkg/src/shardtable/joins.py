"""Join configuration and the hash / sort-merge join kernels.

Both algorithms reduce the two key columnsets to integer group ids (equal
ids <=> byte-equal key encodings) and then expand matching groups into
(left row, right row) index pairs; -1 marks the null side of an outer row.

They differ in how groups are derived and in output order:

  hash  group ids come from 64-bit FNV key hashes (with exact-encoding
        verification to split colliding groups); output is grouped by left
        probe order, with unmatched right rows appended for right/full
        outer joins.
  sort  group ids are ranks in the stable sort of key encodings; output is
        in key-encoding order (group-wise cross products, both sides in
        original order within a group).

Result multisets are identical for both algorithms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, KeyNullError
from .rowcodec import encode_matrix, hash_rows, matrix_as_void, row_encodings
from .table import Table


class JoinType(enum.Enum):
    INNER = "inner"
    LEFT = "left"
    RIGHT = "right"
    FULL_OUTER = "full_outer"

    @classmethod
    def parse(cls, text: str) -> "JoinType":
        aliases = {"outer": cls.FULL_OUTER, "full": cls.FULL_OUTER, "fullouter": cls.FULL_OUTER}
        low = str(text).lower()
        for jt in cls:
            if jt.value == low:
                return jt
        if low in aliases:
            return aliases[low]
        raise ConfigError(f"unknown join type {text!r}")


class JoinAlgorithm(enum.Enum):
    HASH = "hash"
    SORT = "sort"

    @classmethod
    def parse(cls, text: str) -> "JoinAlgorithm":
        low = str(text).lower()
        for alg in cls:
            if alg.value == low:
                return alg
        raise ConfigError(f"unknown join algorithm {text!r}")


def _as_key_tuple(keys) -> tuple[int, ...]:
    if isinstance(keys, (int, np.integer)):
        return (int(keys),)
    return tuple(int(k) for k in keys)


@dataclass(frozen=True)
class JoinConfig:
    """Join type, algorithm, and the key column indices of both sides."""

    join_type: JoinType
    algorithm: JoinAlgorithm
    left_keys: tuple[int, ...]
    right_keys: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "left_keys", _as_key_tuple(self.left_keys))
        object.__setattr__(self, "right_keys", _as_key_tuple(self.right_keys))

    @classmethod
    def from_dict(cls, cfg: Mapping) -> "JoinConfig":
        """Accepts the config-dict shape {'join_type': 'left',
        'algorithm': 'hash', 'left_col': 0, 'right_col': 0}."""
        try:
            return cls(
                join_type=JoinType.parse(cfg["join_type"]),
                algorithm=JoinAlgorithm.parse(cfg["algorithm"]),
                left_keys=_as_key_tuple(cfg["left_col"]),
                right_keys=_as_key_tuple(cfg["right_col"]),
            )
        except KeyError as exc:
            raise ConfigError(f"missing join config key: {exc}") from exc


def validate_join_config(left: Table, right: Table, cfg: JoinConfig) -> None:
    if not cfg.left_keys or not cfg.right_keys:
        raise ConfigError("join keys must be non-empty")
    if len(cfg.left_keys) != len(cfg.right_keys):
        raise ConfigError(
            f"key arity mismatch: {len(cfg.left_keys)} left vs {len(cfg.right_keys)} right"
        )
    for side, table, keys in (("left", left, cfg.left_keys), ("right", right, cfg.right_keys)):
        for k in keys:
            if not 0 <= k < len(table.columns):
                raise IndexError(f"{side} key column {k} out of range")
    for lk, rk in zip(cfg.left_keys, cfg.right_keys):
        lt, rt = left.dtypes[lk], right.dtypes[rk]
        if lt is not rt:
            raise ConfigError(f"key dtype mismatch: left[{lk}]={lt} vs right[{rk}]={rt}")


def check_no_null_keys(table: Table, cols: Sequence[int], what: str = "join key") -> None:
    for c in cols:
        v = table.columns[c].validity
        if v is not None and not bool(v.all()):
            raise KeyNullError(f"null cell in {what} column {c}")


def _cumsum0(counts: np.ndarray) -> np.ndarray:
    out = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=out[1:])
    return out


# --- group-id derivation ---------------------------------------------------


def _group_ids_sorted(left: Table, right: Table, lkeys, rkeys):
    """Group ids equal to the rank of the key encoding (sorted order)."""
    ml, mr = encode_matrix(left, lkeys), encode_matrix(right, rkeys)
    if ml is not None and mr is not None:
        both = np.concatenate([matrix_as_void(ml), matrix_as_void(mr)])
        uniq, inv = np.unique(both, return_inverse=True)
        inv = inv.astype(np.int64, copy=False)
        return inv[: left.num_rows], inv[left.num_rows :], len(uniq)
    enc_l = row_encodings(left, lkeys)
    enc_r = row_encodings(right, rkeys)
    uniq = sorted(set(enc_l) | set(enc_r))
    ids = {k: i for i, k in enumerate(uniq)}
    gl = np.array([ids[e] for e in enc_l], dtype=np.int64)
    gr = np.array([ids[e] for e in enc_r], dtype=np.int64)
    return gl, gr, len(uniq)


def _group_ids_hashed(left: Table, right: Table, lkeys, rkeys):
    """Group ids from FNV key hashes, split exactly on hash collisions."""
    ml, mr = encode_matrix(left, lkeys), encode_matrix(right, rkeys)
    if ml is None or mr is None:
        # Variable-width keys: a dict keyed on encodings is the hash table.
        ids: dict[bytes, int] = {}
        encs = row_encodings(left, lkeys) + row_encodings(right, rkeys)
        for e in encs:
            if e not in ids:
                ids[e] = len(ids)
        inv = np.array([ids[e] for e in encs], dtype=np.int64)
        return inv[: left.num_rows], inv[left.num_rows :], len(ids)
    hashes = np.concatenate([hash_rows(left, lkeys), hash_rows(right, rkeys)])
    _, first, inv = np.unique(hashes, return_index=True, return_inverse=True)
    inv = inv.astype(np.int64, copy=False)
    ngroups = len(first)
    keys = np.concatenate([matrix_as_void(ml), matrix_as_void(mr)])
    clean = keys == keys[first][inv]
    if not clean.all():
        # 64-bit collision: give each distinct key inside the group its own id.
        inv = inv.copy()
        remap: dict[tuple[int, bytes], int] = {}
        for r in np.flatnonzero(~clean):
            key = (int(inv[r]), keys[r].tobytes())
            nid = remap.get(key)
            if nid is None:
                nid = ngroups
                ngroups += 1
                remap[key] = nid
            inv[r] = nid
    return inv[: left.num_rows], inv[left.num_rows :], ngroups


# --- pair expansion --------------------------------------------------------


def _probe_expand(gl, gr, ngroups, emit_unmatched_left):
    """(left, right) row pairs grouped by left probe order."""
    n_l = len(gl)
    order_r = np.argsort(gr, kind="stable")
    cnt_r = np.bincount(gr, minlength=ngroups)
    start_r = _cumsum0(cnt_r)[:-1]
    match = cnt_r[gl] if n_l else np.zeros(0, dtype=np.int64)
    out_cnt = np.where(match == 0, 1, match) if emit_unmatched_left else match
    starts = _cumsum0(out_cnt)
    total = int(starts[-1])
    left_idx = np.repeat(np.arange(n_l, dtype=np.int64), out_cnt)
    right_idx = np.full(total, -1, dtype=np.int64)
    if len(order_r) and total:
        off = np.arange(total, dtype=np.int64) - starts[left_idx]
        matched = match[left_idx] > 0
        pos = start_r[gl[left_idx[matched]]] + off[matched]
        right_idx[matched] = order_r[pos]
    return left_idx, right_idx


def _unmatched_right_rows(gl, gr, ngroups):
    cnt_l = np.bincount(gl, minlength=ngroups)
    if not len(gr):
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(cnt_l[gr] == 0).astype(np.int64)


def _hash_assemble(gl, gr, ngroups, join_type):
    emit_left = join_type in (JoinType.LEFT, JoinType.FULL_OUTER)
    left_idx, right_idx = _probe_expand(gl, gr, ngroups, emit_left)
    if join_type in (JoinType.RIGHT, JoinType.FULL_OUTER):
        extra = _unmatched_right_rows(gl, gr, ngroups)
        left_idx = np.concatenate([left_idx, np.full(len(extra), -1, dtype=np.int64)])
        right_idx = np.concatenate([right_idx, extra])
    return left_idx, right_idx


def _sort_assemble(gl, gr, ngroups, join_type):
    order_l = np.argsort(gl, kind="stable")
    order_r = np.argsort(gr, kind="stable")
    cnt_r = np.bincount(gr, minlength=ngroups)
    cnt_l = np.bincount(gl, minlength=ngroups)
    start_r = _cumsum0(cnt_r)[:-1]
    gl_sorted = gl[order_l]
    match = cnt_r[gl_sorted] if len(gl_sorted) else np.zeros(0, dtype=np.int64)
    emit_left = join_type in (JoinType.LEFT, JoinType.FULL_OUTER)
    out_cnt = np.where(match == 0, 1 if emit_left else 0, match)
    starts = _cumsum0(out_cnt)
    total = int(starts[-1])
    row_of_out = np.repeat(np.arange(len(gl_sorted), dtype=np.int64), out_cnt)
    left_idx = order_l[row_of_out]
    g_out = gl_sorted[row_of_out]
    right_idx = np.full(total, -1, dtype=np.int64)
    if len(order_r) and total:
        off = np.arange(total, dtype=np.int64) - starts[row_of_out]
        matched = match[row_of_out] > 0
        right_idx[matched] = order_r[start_r[g_out[matched]] + off[matched]]
    if join_type in (JoinType.RIGHT, JoinType.FULL_OUTER):
        sel = (
            order_r[cnt_l[gr[order_r]] == 0] if len(order_r) else np.zeros(0, dtype=np.int64)
        )
        if len(sel):
            gkeys = np.concatenate([g_out, gr[sel]])
            left_idx = np.concatenate([left_idx, np.full(len(sel), -1, dtype=np.int64)])
            right_idx = np.concatenate([right_idx, sel])
            # Stable merge keeps matched rows ahead of right-only rows per group.
            perm = np.argsort(gkeys, kind="stable")
            left_idx, right_idx = left_idx[perm], right_idx[perm]
    return left_idx, right_idx


def join_indices(left: Table, right: Table, cfg: JoinConfig):
    """Row-index pairs of the join result; -1 marks a null (unmatched) side."""
    if cfg.algorithm is JoinAlgorithm.HASH:
        gl, gr, ngroups = _group_ids_hashed(left, right, cfg.left_keys, cfg.right_keys)
        return _hash_assemble(gl, gr, ngroups, cfg.join_type)
    gl, gr, ngroups = _group_ids_sorted(left, right, cfg.left_keys, cfg.right_keys)
    return _sort_assemble(gl, gr, ngroups, cfg.join_type)
