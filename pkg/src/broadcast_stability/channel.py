"""Channel models for slotted random-access broadcast.

Two models are supported:

* ``ChannelModel2x2`` -- two sources, two destinations, with capture /
  multipacket reception (MPR): every source-destination pair has one
  reception probability when the source transmits alone and another when
  both sources transmit.
* ``CollisionChannelNxM`` -- N sources, M destinations, any simultaneous
  transmission destroys every packet involved, and a lone transmission
  from source n reaches each destination independently with probability
  ``q_solo[n]`` (destinations are indistinguishable).

Both are immutable and validated on construction. Indices are 0-based in
code: ``q_solo[n][m]`` is source ``n+1`` to destination ``m+1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np


class ChannelError(ValueError):
    """Invalid model or policy input; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _prob(value: Any, where: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ChannelError(where, f"not a number: {value!r}") from None
    if not np.isfinite(x) or x < 0.0 or x > 1.0:
        raise ChannelError(where, f"probability out of range [0, 1]: {x}")
    return x


def _matrix2(values: Any, name: str) -> tuple[tuple[float, float], tuple[float, float]]:
    if len(values) != 2 or any(len(row) != 2 for row in values):
        raise ChannelError(name, "expected a 2x2 nested list")
    return tuple(
        tuple(_prob(values[n][m], f"{name}[{n}][{m}]") for m in range(2)) for n in range(2)
    )


@dataclass(frozen=True)
class ChannelModel2x2:
    """Two-source, two-destination MPR channel.

    ``q_solo[n][m]`` is the probability that a packet from source n is
    received at destination m when only n transmits; ``q_joint[n][m]`` is
    the same when both sources transmit.
    """

    q_solo: tuple[tuple[float, float], tuple[float, float]]
    q_joint: tuple[tuple[float, float], tuple[float, float]]
    allow_joint_above_solo: bool = False

    def __post_init__(self):
        object.__setattr__(self, "q_solo", _matrix2(self.q_solo, "q_solo"))
        object.__setattr__(self, "q_joint", _matrix2(self.q_joint, "q_joint"))
        validate_channel_2x2(self)

    @property
    def n_sources(self) -> int:
        return 2

    @property
    def m_destinations(self) -> int:
        return 2

    def to_dict(self) -> dict:
        d = {
            "model": "mpr2x2",
            "q_solo": [list(r) for r in self.q_solo],
            "q_joint": [list(r) for r in self.q_joint],
        }
        if self.allow_joint_above_solo:
            d["allow_joint_above_solo"] = True
        return d


@dataclass(frozen=True)
class CollisionChannelNxM:
    """Collision channel with N sources and M indistinguishable destinations."""

    n_sources: int
    m_destinations: int
    q_solo: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if isinstance(self.q_solo, (int, float)):
            raise ChannelError("q_solo", "expected one probability per source")
        q = tuple(_prob(x, f"q_solo[{i}]") for i, x in enumerate(self.q_solo))
        object.__setattr__(self, "q_solo", q)
        validate_collision_channel(self)

    def to_dict(self) -> dict:
        return {
            "model": "collision",
            "n_sources": self.n_sources,
            "m_destinations": self.m_destinations,
            "q_solo": list(self.q_solo),
        }


Channel = Union[ChannelModel2x2, CollisionChannelNxM]


def validate_channel_2x2(c: ChannelModel2x2) -> ChannelModel2x2:
    for name in ("q_solo", "q_joint"):
        _matrix2(getattr(c, name), name)
    if not c.allow_joint_above_solo:
        for n in range(2):
            for m in range(2):
                if c.q_joint[n][m] > c.q_solo[n][m]:
                    raise ChannelError(
                        f"q_joint[{n}][{m}]",
                        f"joint exceeds solo ({c.q_joint[n][m]} > {c.q_solo[n][m]})",
                    )
    return c


def validate_collision_channel(c: CollisionChannelNxM) -> CollisionChannelNxM:
    if not isinstance(c.n_sources, (int, np.integer)) or c.n_sources < 1:
        raise ChannelError("n_sources", f"must be a positive integer, got {c.n_sources!r}")
    if not isinstance(c.m_destinations, (int, np.integer)) or c.m_destinations < 1:
        raise ChannelError(
            "m_destinations", f"must be a positive integer, got {c.m_destinations!r}"
        )
    if len(c.q_solo) != c.n_sources:
        raise ChannelError(
            "q_solo", f"expected {c.n_sources} entries, got {len(c.q_solo)}"
        )
    for i, q in enumerate(c.q_solo):
        _prob(q, f"q_solo[{i}]")
        if q == 0.0:
            raise ChannelError(f"q_solo[{i}]", "zero success probability")
    return c


def _vector(values: Any, n: int | None, name: str, upper_open: bool) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ChannelError(name, f"not a numeric vector: {values!r}") from None
    if n is not None and arr.size != n:
        raise ChannelError(name, f"expected {n} entries, got {arr.size}")
    for i, x in enumerate(arr):
        if not np.isfinite(x) or x < 0.0 or x > 1.0 or (upper_open and x == 1.0):
            rng = "[0, 1)" if upper_open else "[0, 1]"
            raise ChannelError(f"{name}[{i}]", f"out of range {rng}: {x}")
    arr.setflags(write=False)
    return arr


def transmit_policy(p: Sequence[float], n: int | None = None) -> np.ndarray:
    """Validated read-only vector of per-source transmission probabilities."""
    return _vector(p, n, "p", upper_open=False)


def arrival_rates(lam: Sequence[float], n: int | None = None) -> np.ndarray:
    """Validated read-only vector of Bernoulli arrival rates (packets/slot)."""
    return _vector(lam, n, "lambda", upper_open=True)


def channel_from_dict(d: dict) -> Channel:
    if not isinstance(d, dict):
        raise ChannelError("model", "channel document must be an object")
    model = d.get("model")
    if model == "mpr2x2":
        for key in ("q_solo", "q_joint"):
            if key not in d:
                raise ChannelError(key, "missing")
        return ChannelModel2x2(
            q_solo=d["q_solo"],
            q_joint=d["q_joint"],
            allow_joint_above_solo=bool(d.get("allow_joint_above_solo", False)),
        )
    if model == "collision":
        for key in ("n_sources", "m_destinations", "q_solo"):
            if key not in d:
                raise ChannelError(key, "missing")
        q = d["q_solo"]
        if isinstance(q, (int, float)):
            q = [q] * int(d["n_sources"])
        return CollisionChannelNxM(
            n_sources=d["n_sources"], m_destinations=d["m_destinations"], q_solo=tuple(q)
        )
    raise ChannelError("model", f"unknown model {model!r} (expected 'mpr2x2' or 'collision')")


def dumps(c: Channel) -> str:
    return json.dumps(c.to_dict(), sort_keys=True)


def loads(text: str) -> Channel:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChannelError("<document>", f"invalid JSON: {exc}") from None
    return channel_from_dict(d)


def load_channel(path: str | Path) -> Channel:
    return loads(Path(path).read_text())


# Reception probabilities used by the two-source MPR examples.
CHANNEL_I = ChannelModel2x2(
    q_solo=((0.8, 0.6), (0.5, 0.7)),
    q_joint=((0.1, 0.05), (0.05, 0.25)),
)
CHANNEL_II = ChannelModel2x2(
    q_solo=((0.8, 0.6), (0.6, 0.8)),
    q_joint=((0.5, 0.4), (0.4, 0.5)),
)
