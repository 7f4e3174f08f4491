"""Small immutable 3-vector used across the simulator."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        # one check covers nan and inf in any component
        if not math.isfinite(self.x + self.y + self.z):
            raise ValueError(f"non-finite vector component in {self!r}")

    def __add__(self, other: Vec3) -> Vec3:
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Vec3) -> Vec3:
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, k: float) -> Vec3:
        return Vec3(self.x * k, self.y * k, self.z * k)

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> Vec3:
        return Vec3(self.x / k, self.y / k, self.z / k)

    def __neg__(self) -> Vec3:
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: Vec3) -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def unit(self) -> Vec3:
        """Unit vector in the same direction; the zero vector maps to itself."""
        n = self.norm()
        if n == 0.0:
            return Vec3()
        return Vec3(self.x / n, self.y / n, self.z / n)

    def distance(self, other: Vec3) -> float:
        return math.sqrt((self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @classmethod
    def of(cls, seq) -> Vec3:
        x, y, z = seq
        return cls(float(x), float(y), float(z))


ZERO = Vec3()


@dataclass(frozen=True)
class Box:
    """Axis-aligned mission area anchored at the origin."""

    x: float = 500.0
    y: float = 500.0
    z: float = 250.0

    def contains(self, p: Vec3, tol: float = 1e-9) -> bool:
        return (-tol <= p.x <= self.x + tol and -tol <= p.y <= self.y + tol
                and -tol <= p.z <= self.z + tol)

    def clamp(self, p: Vec3) -> Vec3:
        return Vec3(min(max(p.x, 0.0), self.x), min(max(p.y, 0.0), self.y),
                    min(max(p.z, 0.0), self.z))

    @property
    def center_ground(self) -> Vec3:
        return Vec3(self.x / 2, self.y / 2, 0.0)

    def diagonal(self) -> float:
        return math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)
