"""Material records for the hyperelastic-viscoelastic constitutive law.

The strain energy is compressible Mooney-Rivlin,

    psi = c10*(I1_bar - 3) + c01*(I2_bar - 3) + (1/d1)*(J - 1)**2,

with isochoric invariants, plus an optional Prony series acting on the
deviatoric stress (relative moduli ``g`` and relaxation times ``tau``).
Units are whatever the caller feeds in; the solver never converts.
"""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class PronyTerm:
    g: float
    tau: float

    def __post_init__(self):
        if not 0.0 < self.g < 1.0:
            raise ValueError(f"Prony relative modulus must be in (0,1), got {self.g}")
        if self.tau <= 0.0:
            raise ValueError(f"Prony relaxation time must be positive, got {self.tau}")


@dataclass(frozen=True)
class MaterialParams:
    c10: float
    c01: float
    d1: float
    density: float
    prony: tuple[PronyTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.c10 <= 0.0:
            raise ValueError(f"c10 must be positive, got {self.c10}")
        if self.c01 < 0.0:
            raise ValueError(f"c01 must be non-negative, got {self.c01}")
        if self.d1 <= 0.0:
            raise ValueError(f"d1 must be positive, got {self.d1}")
        if self.density <= 0.0:
            raise ValueError(f"density must be positive, got {self.density}")
        object.__setattr__(self, "prony", tuple(self.prony))
        if sum(t.g for t in self.prony) >= 1.0:
            raise ValueError("sum of Prony relative moduli must stay below 1")

    @property
    def shear_modulus(self) -> float:
        """Small-strain shear modulus 2*(c10 + c01)."""
        return 2.0 * (self.c10 + self.c01)

    @property
    def bulk_modulus(self) -> float:
        """Small-strain bulk modulus 2/d1."""
        return 2.0 / self.d1

    def to_dict(self) -> dict:
        return {
            "c10": self.c10,
            "c01": self.c01,
            "d1": self.d1,
            "density": self.density,
            "prony": [{"g": t.g, "tau": t.tau} for t in self.prony],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialParams":
        return cls(
            c10=float(d["c10"]),
            c01=float(d["c01"]),
            d1=float(d["d1"]),
            density=float(d["density"]),
            prony=tuple(PronyTerm(float(t["g"]), float(t["tau"])) for t in d.get("prony", [])),
        )
