from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Optional

from ..pathsample import GuidanceParams

VARIANTS = ("full", "no_agt", "no_agm", "no_ag")


@dataclass
class ModelConfig:
    d0: int = 256
    d_hidden: int = 256
    L_M: int = 2
    L_T: int = 1
    heads_M: int = 1
    heads_T: int = 1
    alpha: float = 0.8
    k_top: int = 5
    k_btm: int = 5
    n: int = 8
    # None -> 2 * L_M, the AGM receptive field
    r_top: Optional[int] = None
    r_btm: int = 6
    w_min: float = 1e-3
    dropout: float = 0.2
    slope: float = 0.2
    ln_eps: float = 1e-5
    variant: str = "full"
    multi_label: bool = False
    ffn_in_agt: bool = False

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.L_M < 1 or self.L_T < 1:
            raise ValueError("L_M and L_T must be >= 1")
        if min(self.d0, self.d_hidden, self.heads_M, self.heads_T) < 1:
            raise ValueError("dimensions and head counts must be positive")
        if self.d_hidden % self.heads_T:
            raise ValueError("heads_T must divide d_hidden")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        self.guidance_params().validate()

    def guidance_params(self) -> GuidanceParams:
        return GuidanceParams(
            k_top=self.k_top, k_btm=self.k_btm, n=self.n, alpha=self.alpha,
            r_top=self.r_top if self.r_top is not None else 2 * self.L_M,
            r_btm=self.r_btm, w_min=self.w_min,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
