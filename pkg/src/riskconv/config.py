"""Run configuration shared by the CLI and the experiment scripts."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass
from typing import Optional

from .errors import InvalidArgument

SEED_ENV = "RISKCONV_SEED"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    tol: float = 1e-9
    mode: str = "float"          # "float" or "rational"
    out: Optional[str] = None

    def __post_init__(self):
        if self.mode not in ("float", "rational"):
            raise InvalidArgument(f"mode must be 'float' or 'rational', got {self.mode!r}")
        if not self.tol > 0:
            raise InvalidArgument(f"tolerance must be positive, got {self.tol!r}")

    @property
    def exact(self) -> bool:
        return self.mode == "rational"

    @classmethod
    def resolve(cls, seed=0, tol=1e-9, mode="float", out=None, environ=None) -> RunConfig:
        """Build a config; ``RISKCONV_SEED`` in the environment overrides ``seed``."""
        env = os.environ if environ is None else environ
        if env.get(SEED_ENV, "").strip():
            try:
                seed = int(env[SEED_ENV])
            except ValueError:
                raise InvalidArgument(f"{SEED_ENV} must be an integer") from None
        return cls(seed=int(seed), tol=float(tol), mode=mode, out=out)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d
