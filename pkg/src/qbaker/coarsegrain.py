"""Coarse-graining of dot-basis labels: a kept middle window, ignored edges.

A graining splits the label string into `left` ignored leading bits, a kept
window of width qubits - left - right, and `right` ignored trailing bits.
Projectors onto fixed window values are diagonal in the dot-basis, which is
why all history propagation happens in dot-basis coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bakermap import DENSE_LIMIT, basis_state
from .core import SystemShape, index_to_bits
from .errors import ParameterError, ResourceLimitError


@dataclass(frozen=True)
class CoarseGraining:
    """Label split (left ignored | kept window | right ignored) for a given shape."""

    shape: SystemShape
    left: int
    right: int

    def __post_init__(self) -> None:
        # structural validity only; the standing inequalities against the dot
        # position are dynamical constraints checked by validate_run, so that
        # pure masking and enumeration stay usable for any split
        if self.left < 0:
            raise ParameterError(f"need left >= 0, got left={self.left}")
        if self.right < 0:
            raise ParameterError(f"need right >= 0, got right={self.right}")
        if self.kept < 1:
            raise ParameterError(
                f"need left + right < qubits, got left={self.left}, right={self.right}, "
                f"qubits={self.shape.qubits}"
            )

    @property
    def kept(self) -> int:
        return self.shape.qubits - self.left - self.right

    def check_window(self, window: str) -> None:
        if len(window) != self.kept or any(ch not in "01" for ch in window):
            raise ParameterError(
                f"window must be {self.kept} bits of '0'/'1', got {window!r}"
            )


def project(coeffs: np.ndarray, graining: CoarseGraining, window: str) -> np.ndarray:
    """Keep only dot-basis coefficients whose window bits equal `window`.

    Diagonal 0/1 mask; the surviving flat indices are those whose middle
    label bits (positions left+1 .. left+kept) spell the window string.
    """
    graining.check_window(window)
    arr = np.asarray(coeffs, dtype=np.complex128)
    if arr.shape != (graining.shape.dim,):
        raise ValueError(f"coefficients must have shape ({graining.shape.dim},), got {arr.shape}")
    view = arr.reshape(1 << graining.left, 1 << graining.kept, 1 << graining.right)
    out = np.zeros_like(view)
    idx = int(window, 2)
    out[:, idx, :] = view[:, idx, :]
    return out.reshape(graining.shape.dim)


def enumerate_block(graining: CoarseGraining, window: str) -> list[str]:
    """All label strings with the given window value, leading bits major.

    Ordering is lexicographic in (leading bits, trailing bits); every
    ensemble reduction in this package iterates labels in this order.
    """
    graining.check_window(window)
    labels = []
    for a in range(1 << graining.left):
        head = index_to_bits(a, graining.left)
        for b in range(1 << graining.right):
            labels.append(head + window + index_to_bits(b, graining.right))
    return labels


def validate_run(graining: CoarseGraining, steps: int) -> None:
    """Check the standing inequalities for a history run of `steps` iterations.

    Propagation needs left < dot (some window bits are read from the live
    register), right < qubits - dot (spectator bits exist), and
    1 <= steps < right (no window reading ever reaches the injected fresh
    bits).  The graining constructor deliberately does not enforce these, so
    every dynamical entry point funnels through here first.
    """
    shape = graining.shape
    if not graining.left < shape.dot:
        raise ParameterError(f"need left < dot, got left={graining.left}, dot={shape.dot}")
    if not graining.right < shape.qubits - shape.dot:
        raise ParameterError(
            f"need right < qubits - dot, got right={graining.right}, "
            f"qubits={shape.qubits}, dot={shape.dot}"
        )
    if not 1 <= steps < graining.right:
        raise ParameterError(
            f"need 1 <= steps < right, got steps={steps}, right={graining.right}"
        )


@dataclass(frozen=True)
class BlockInitialState:
    """Uniform mixture over all labels sharing one kept-window value.

    Represented as an ensemble of dot-basis labels with equal weight
    2**-(left+right); never materialized as a dense matrix outside tests.
    """

    graining: CoarseGraining
    window: str

    def __post_init__(self) -> None:
        self.graining.check_window(self.window)

    @property
    def weight(self) -> float:
        return 2.0 ** -(self.graining.left + self.graining.right)

    def labels(self) -> list[str]:
        return enumerate_block(self.graining, self.window)

    def dense_matrix(self) -> np.ndarray:
        """Density matrix in computational coordinates.  Test oracle only."""
        shape = self.graining.shape
        if shape.qubits > DENSE_LIMIT:
            raise ResourceLimitError(
                f"dense initial state limited to qubits <= {DENSE_LIMIT}, got {shape.qubits}"
            )
        rho = np.zeros((shape.dim, shape.dim), dtype=np.complex128)
        for label in self.labels():
            vec = basis_state(shape, shape.dot, label)
            rho += self.weight * np.outer(vec, vec.conj())
        return rho
