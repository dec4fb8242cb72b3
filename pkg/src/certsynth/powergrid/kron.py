"""Elimination of the algebraic variables from a linearized DAE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SingularDs
from .wtg import DaeBlocks


@dataclass(frozen=True)
class KronModel:
    """dx = (A x + B u) dt + Sigma dw;  Pgen = C x + D u + E dw/dt."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Sigma: np.ndarray
    E: np.ndarray


def kron_reduce(blk: DaeBlocks) -> KronModel:
    s = np.linalg.svd(blk.Ds, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise SingularDs(f"D_s is singular (rank {int(np.sum(s > 1e-12 * s[0]))} of {len(s)})")
    inv_C = np.linalg.solve(blk.Ds, blk.Cs)
    inv_N = np.linalg.solve(blk.Ds, blk.Ns)
    inv_S = np.linalg.solve(blk.Ds, blk.S2)
    return KronModel(
        A=blk.As - blk.Bs @ inv_C,
        B=blk.Ms - blk.Bs @ inv_N,
        C=blk.Es - blk.Fs @ inv_C,
        D=-blk.Fs @ inv_N,
        Sigma=blk.S1 - blk.Bs @ inv_S,
        E=-blk.Fs @ inv_S,
    )
