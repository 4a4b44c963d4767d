"""Run configuration: one JSON file governs a whole pipeline run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace

from .basis import BasisConfig
from .driver import DriverConfig
from .korner import KornerConfig
from .l0approx import RhoRule

OUT_ENV = "ALMOSTINT_OUT"


@dataclass(frozen=True)
class RunConfig:
    rho: object = "one_over_k_plus_2"
    l_max: int = 3
    N_max: int = 3
    profile: str = "desk"
    seed: int = 0
    out_dir: str = "almostint-out"
    basis: BasisConfig = field(default_factory=BasisConfig)
    korner: KornerConfig = field(default_factory=KornerConfig)
    driver: DriverConfig = field(default_factory=DriverConfig)

    def __post_init__(self):
        RhoRule.from_obj(self.rho)
        if isinstance(self.rho, list):
            object.__setattr__(self, "rho", tuple(self.rho))
        if self.l_max < 1 or self.N_max < 0:
            raise ValueError("l_max must be >= 1 and N_max >= 0")
        if self.profile not in ("faithful", "desk"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.driver.profile != self.profile:
            object.__setattr__(self, "driver", replace(self.driver, profile=self.profile))
        budgets = [self.basis.cap_budget, self.basis.max_pool, self.basis.solver.max_iterations,
                   self.driver.g_cap_budget, self.driver.g_max_pool, self.korner.term_budget]
        if any(b <= 0 for b in budgets) or self.basis.solver.regularization <= 0:
            raise ValueError("all budgets must be positive")

    @property
    def rho_rule(self) -> RhoRule:
        return RhoRule.from_obj(list(self.rho) if isinstance(self.rho, tuple) else self.rho)

    def to_dict(self) -> dict:
        return {
            "rho": list(self.rho) if isinstance(self.rho, tuple) else self.rho,
            "l_max": self.l_max,
            "N_max": self.N_max,
            "profile": self.profile,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "basis": self.basis.to_dict(),
            "korner": self.korner.to_dict(),
            "driver": self.driver.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "basis" in d:
            d["basis"] = BasisConfig.from_dict(d["basis"])
        if "korner" in d:
            d["korner"] = KornerConfig.from_dict(d["korner"])
        if "driver" in d:
            d["driver"] = DriverConfig.from_dict(d["driver"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self
