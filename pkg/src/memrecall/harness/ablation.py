"""The ten ablation configurations."""
from __future__ import annotations

from dataclasses import dataclass

from ..diffcore import ContractError


@dataclass(frozen=True)
class AblationConfig:
    controller: str = "lstm"   # "ff" or "lstm"
    mem: bool = False
    aux: str = "none"          # "none", "cpc" or "rec"
    jumpy: bool = True

    def __post_init__(self):
        object.__setattr__(self, "controller", self.controller.lower())
        object.__setattr__(self, "aux", (self.aux or "none").lower())
        if self.controller not in ("ff", "lstm"):
            raise ContractError(f"controller must be ff or lstm, got {self.controller!r}")
        if self.aux not in ("none", "cpc", "rec"):
            raise ContractError(f"aux must be none, cpc or rec, got {self.aux!r}")
        if not self.jumpy and not self.jumpy_applies:
            raise ContractError("jumpy=False only applies to LSTM + MEM + CPC")

    @property
    def jumpy_applies(self) -> bool:
        return self.controller == "lstm" and self.mem and self.aux == "cpc"

    @property
    def name(self) -> str:
        parts = [self.controller]
        if self.mem:
            parts.append("mem")
        if self.aux != "none":
            parts.append(self.aux)
        if not self.jumpy:
            parts.append("nojumpy")
        return "_".join(parts)

    @property
    def label(self) -> str:
        parts = [self.controller.upper()]
        if self.mem:
            parts.append("MEM")
        if self.aux != "none":
            parts.append(self.aux.upper())
        text = " + ".join(parts)
        return text + (" (no jumpy)" if not self.jumpy else "")

    @classmethod
    def parse(cls, name: str) -> "AblationConfig":
        """Inverse of :attr:`name`; also accepts labels such as ``LSTM + MEM + CPC`` and ``MRA``."""
        text = str(name).lower().strip()
        if text in ("mra",):
            return MRA
        tokens = [t for t in text.replace("+", " ").replace("_", " ").replace("(", " ").replace(")", " ").split() if t]
        controller = tokens[0] if tokens else ""
        rest = set(tokens[1:])
        jumpy = not ({"nojumpy"} & rest or {"no", "jumpy"} <= rest)
        rest -= {"nojumpy", "no", "jumpy"}
        aux = "none"
        for a in ("cpc", "rec"):
            if a in rest:
                aux = a
                rest.discard(a)
        mem = "mem" in rest
        rest.discard("mem")
        if rest or controller not in ("ff", "lstm"):
            raise ContractError(f"cannot parse ablation config {name!r}")
        return cls(controller, mem, aux, jumpy)


MRA = AblationConfig("lstm", True, "cpc", True)

ALL_CONFIGS = (
    MRA,
    AblationConfig("lstm", True, "rec"),
    AblationConfig("lstm", True),
    AblationConfig("lstm", False, "cpc"),
    AblationConfig("ff", True, "rec"),
    AblationConfig("ff", True, "cpc"),
    AblationConfig("lstm"),
    AblationConfig("ff", True),
    AblationConfig("ff"),
    AblationConfig("lstm", True, "cpc", jumpy=False),
)
