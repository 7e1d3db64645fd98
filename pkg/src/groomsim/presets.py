"""Per-dataset settings from the six communication systems.

``r0`` and ``steps`` are the simulation budgets used when fitting each
dataset; ``alpha``/``beta`` are the fitted cost-function parameters;
``a``/``b`` are the N-m-u regression coefficients measured on the real data.
``r0`` was defined as the 75th percentile of use-days divided by the period,
so ``u_fixed = r0 * steps`` recovers that percentile.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class DatasetPreset:
    name: str
    r0: float
    steps: int
    alpha: float
    beta: float
    a: float
    b: float
    powerlaw_exponent: float

    @property
    def u_fixed(self) -> float:
        return self.r0 * self.steps


PRESETS = {
    p.name: p
    for p in (
        DatasetPreset("twitter", 0.126, 998, 1.34, 0.24, 1.189567, 1.309346, 1.92),
        DatasetPreset("755_group_chat", 0.258, 120, 1.27, 0.39, 1.214229, 1.269766, 3.71),
        DatasetPreset("755_wall", 0.225, 120, 3.89, 0.23, 1.562142, 1.476393, 2.29),
        DatasetPreset("ameba_pigg", 0.164, 456, 1.62, 0.64, 1.0954104, 1.0939529, 1.97),
        DatasetPreset("mobile_phone", 0.589, 297, 0.05, 0.31, 1.07332, 1.25628, 1.98),
        DatasetPreset("sms", 0.107, 543, 5.05, 0.34, 1.24089, 1.21949, 2.00),
    )
}


def get_preset(name: str) -> DatasetPreset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
