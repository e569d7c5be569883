"""Time meshes for one-step integration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    times: tuple
    uniform: bool = False

    def __post_init__(self):
        t = tuple(float(v) for v in self.times)
        if len(t) < 2:
            raise MeshError("a mesh needs at least one step")
        if t[0] != 0.0:
            raise MeshError("mesh must start at t=0")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise MeshError("mesh times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def N(self):
        return len(self.times) - 1

    @property
    def tau(self):
        return self.times[-1]

    @property
    def steps(self):
        t = self.times
        if self.uniform:
            h = self.tau / self.N
            return [h] * self.N
        return [b - a for a, b in zip(t, t[1:])]


def exp_sine_warp(t):
    """``t -> e^{5t} sin(2.6 t) / (e^5 sin 2.6)``, a monotone map of [0, 1]."""
    return math.exp(5.0 * t) * math.sin(2.6 * t) / (math.exp(5.0) * math.sin(2.6))


WARPS: dict[str, Callable[[float], float]] = {
    "exp-sine": exp_sine_warp,
}


def make_mesh(kind: str, N: int = 1, tau: float = 1.0, warp=None, times=None) -> Mesh:
    """Build a uniform, warped or explicit mesh on ``[0, tau]``.

    ``warp`` is a callable or a registered warp name; it must fix 0 and 1 and
    be strictly increasing on the sample grid ``i/N``.
    """
    if kind == "explicit":
        if times is None:
            raise MeshError("explicit mesh needs times")
        return Mesh(tuple(times))
    if N < 1:
        raise MeshError("N must be at least 1")
    tau = float(tau)
    if kind == "uniform":
        t = [tau * i / N for i in range(N)] + [tau]
        return Mesh(tuple(t), uniform=True)
    if kind == "warped":
        if warp is None:
            warp = "exp-sine"
        if isinstance(warp, str):
            try:
                warp = WARPS[warp]
            except KeyError:
                raise MeshError(f"unknown warp {warp!r}") from None
        s = [warp(i / N) for i in range(N + 1)]
        if abs(s[0]) > 1e-12 or abs(s[-1] - 1.0) > 1e-12:
            raise MeshError("warp must map 0 to 0 and 1 to 1")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise MeshError("warp is not strictly increasing on the sample grid")
        t = [0.0] + [tau * v for v in s[1:-1]] + [tau]
        return Mesh(tuple(t))
    raise MeshError(f"unknown mesh kind {kind!r}")


def step_sum(mesh: Mesh) -> float:
    return math.fsum(mesh.steps)


def as_array(mesh: Mesh) -> np.ndarray:
    return np.asarray(mesh.times)
