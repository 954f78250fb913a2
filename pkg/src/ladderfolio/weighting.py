"""Tukey-ladder transforms of market capitalization and the normalized weights they induce."""

from __future__ import annotations

import difflib
import math
from collections.abc import Mapping
from enum import Enum
from typing import Iterator

import numpy as np

from .errors import DomainError

NORMALIZATION_TOL = 1e-12


class Transform(str, Enum):
    INV_SQUARE = "inv-square"
    INV = "inv"
    INV_SQRT = "inv-sqrt"
    LOG = "log"
    SQRT = "sqrt"
    IDENTITY = "identity"
    SQUARE = "square"
    EQUAL = "equal"

    @property
    def exponent(self) -> float | None:
        """Power applied to cap for the power rungs; ``None`` for log and equal."""
        return _EXPONENTS.get(self)

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def ladder_position(self) -> int | None:
        """0 for 1/x^2 up to 6 for x^2; ``None`` for equal weighting."""
        return LADDER.index(self) if self in LADDER else None

    @classmethod
    def parse(cls, text: str) -> "Transform":
        key = text.strip().lower()
        try:
            return cls(key)
        except ValueError:
            pass
        hint = _ALIASES.get(key.replace(" ", ""))
        if hint is None:
            close = difflib.get_close_matches(key, [t.value for t in cls], n=1)
            hint = cls(close[0]) if close else None
        msg = f"invalid transform {text!r}; choose from {', '.join(t.value for t in cls)}"
        if hint is not None:
            msg += f" (did you mean {hint.value!r}?)"
        raise ValueError(msg)

    def __str__(self) -> str:
        return self.value


LADDER = (
    Transform.INV_SQUARE,
    Transform.INV,
    Transform.INV_SQRT,
    Transform.LOG,
    Transform.SQRT,
    Transform.IDENTITY,
    Transform.SQUARE,
)
ALL_TRANSFORMS = LADDER + (Transform.EQUAL,)

_EXPONENTS = {
    Transform.INV_SQUARE: -2.0,
    Transform.INV: -1.0,
    Transform.INV_SQRT: -0.5,
    Transform.SQRT: 0.5,
    Transform.IDENTITY: 1.0,
    Transform.SQUARE: 2.0,
}
_LABELS = {
    Transform.INV_SQUARE: "1/x^2",
    Transform.INV: "1/x",
    Transform.INV_SQRT: "1/sqrt(x)",
    Transform.LOG: "log(x)",
    Transform.SQRT: "sqrt(x)",
    Transform.IDENTITY: "x",
    Transform.SQUARE: "x^2",
    Transform.EQUAL: "EQU",
}
_ALIASES = {
    "1/x^2": Transform.INV_SQUARE,
    "1/x**2": Transform.INV_SQUARE,
    "x^-2": Transform.INV_SQUARE,
    "1/x": Transform.INV,
    "1/sqrt(x)": Transform.INV_SQRT,
    "1/sqrtx": Transform.INV_SQRT,
    "log(x)": Transform.LOG,
    "ln": Transform.LOG,
    "sqrt(x)": Transform.SQRT,
    "x": Transform.IDENTITY,
    "mkc": Transform.IDENTITY,
    "cap": Transform.IDENTITY,
    "x^2": Transform.SQUARE,
    "x**2": Transform.SQUARE,
    "equ": Transform.EQUAL,
    "ew": Transform.EQUAL,
}


def _check_domain(t: Transform, cap: float, name: str = "") -> None:
    who = f" for {name}" if name else ""
    if not cap > 0:
        raise DomainError(f"market cap must be > 0{who}, got {cap}")
    if t is Transform.LOG and not cap > 1:
        raise DomainError(f"log weighting needs cap > 1{who}, got {cap}")


def transform_value(t: Transform, cap: float) -> float:
    _check_domain(t, cap)
    if t is Transform.EQUAL:
        return 1.0
    if t is Transform.LOG:
        return math.log(cap)
    return cap ** t.exponent


def transform_array(t: Transform, caps: np.ndarray) -> np.ndarray:
    """Vectorized ``transform_value`` up to a common positive factor.

    Power rungs are evaluated on ``caps / max(caps)`` so ``x^2`` and ``1/x^2``
    stay finite for any cap scale; this rescales all values uniformly and
    leaves normalized weights unchanged. ``NaN`` entries pass through.
    """
    caps = np.asarray(caps, dtype=float)
    ok = ~np.isnan(caps)
    if np.any(caps[ok] <= 0):
        raise DomainError("market cap must be > 0")
    if t is Transform.EQUAL:
        return np.where(ok, 1.0, np.nan)
    if t is Transform.LOG:
        if np.any(caps[ok] <= 1):
            raise DomainError("log weighting needs cap > 1")
        return np.log(caps)
    ref = np.nanmax(caps) if ok.any() else 1.0
    return (caps / ref) ** t.exponent


class TargetWeights(Mapping):
    """Read-only mapping security_id -> weight; nonnegative and summing to 1."""

    __slots__ = ("_w",)

    def __init__(self, entries: Mapping[str, float]):
        w = {k: float(v) for k, v in entries.items()}
        if not w:
            raise ValueError("TargetWeights needs at least one security")
        if any(v < 0 for v in w.values()):
            raise ValueError("weights must be nonnegative")
        if abs(math.fsum(w.values()) - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"weights sum to {math.fsum(w.values())!r}, not 1")
        self._w = w

    def __getitem__(self, key: str) -> float:
        return self._w[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._w)

    def __len__(self) -> int:
        return len(self._w)

    def __repr__(self) -> str:
        return f"TargetWeights({self._w!r})"


def _normalize(values: np.ndarray) -> np.ndarray:
    total = math.fsum(values)
    return values / total


def target_weights(t: Transform, caps: Mapping[str, float]) -> TargetWeights:
    """``w_i = f(cap_i) / sum_j f(cap_j)`` over the securities in ``caps``."""
    if not caps:
        raise ValueError("caps must be nonempty")
    ids = list(caps)
    vals = np.array([caps[k] for k in ids], dtype=float)
    for k, v in zip(ids, vals):
        _check_domain(t, v, k)
    w = _normalize(transform_array(t, vals))
    return TargetWeights(dict(zip(ids, w)))


def _power_weights(exponent: float, caps: Mapping[str, float]) -> dict[str, float]:
    """Weights proportional to ``cap**exponent`` for an arbitrary exponent (test helper)."""
    ids = list(caps)
    vals = np.array([caps[k] for k in ids], dtype=float)
    if np.any(vals <= 0):
        raise DomainError("market cap must be > 0")
    return dict(zip(ids, _normalize((vals / vals.max()) ** exponent)))
