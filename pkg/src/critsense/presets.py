"""Named model presets encoding the configurations studied in the experiments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .models import BicliqueSpec, GroverSpec, ModelSpec, PSpinSpec


def _grover(L: int) -> ModelSpec:
    return GroverSpec(L=L)


def _pspin_first(L: int) -> ModelSpec:
    return PSpinSpec(L=L, p=3, k=1, lambda_=1.0)


def _pspin_second(L: int) -> ModelSpec:
    return PSpinSpec(L=L, p=5, k=2, lambda_=0.1)


def _biclique(W_A: float, W_B: float) -> Callable[[int], ModelSpec]:
    def build(L: int) -> ModelSpec:
        if L < 5 or L % 2 == 0:
            raise ValueError(f"biclique total size must be odd and >= 5, got {L}")
        return BicliqueSpec(L_A=(L + 1) // 2, L_B=(L - 1) // 2,
                            J=1.0, W_A=W_A, W_B=W_B)
    return build


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    family: Callable[[int], ModelSpec]
    theta_c_hint: float | None
    default_sizes: tuple[int, ...]
    dephasing_gammas: tuple[float, ...] = ()


PRESETS: dict[str, Preset] = {
    "grover": Preset(
        name="grover",
        description="single marked configuration, first-order at theta_c = 1",
        family=_grover,
        theta_c_hint=1.0,
        default_sizes=tuple(range(6, 27, 2)),
        dephasing_gammas=(0.01, 0.02, 0.05, 0.1, 0.2),
    ),
    "pspin-first": Preset(
        name="pspin-first",
        description="p-spin p=3, k=1, lambda=1: first order near theta_c = 1.3",
        family=_pspin_first,
        theta_c_hint=1.3,
        default_sizes=tuple(range(8, 33, 2)),
        dephasing_gammas=(0.002, 0.005, 0.01, 0.02, 0.05),
    ),
    "pspin-second": Preset(
        name="pspin-second",
        description="p-spin p=5, k=2, lambda=0.1: second order near theta_c = 1.8",
        family=_pspin_second,
        theta_c_hint=1.8,
        default_sizes=tuple(range(10, 31, 2)),
    ),
    "biclique-scaling": Preset(
        name="biclique-scaling",
        description="biclique J=1, W_A=0.49, W_B=0.5: first order near theta_c = 0.05",
        family=_biclique(0.49, 0.5),
        theta_c_hint=0.05,
        default_sizes=(5, 7, 9, 11, 13),
    ),
    "biclique-dynamics": Preset(
        name="biclique-dynamics",
        description="biclique J=1, W_A=4, W_B=3.5: dynamics and dephasing runs",
        family=_biclique(4.0, 3.5),
        theta_c_hint=None,
        default_sizes=(5, 7, 9, 11),
        dephasing_gammas=(0.002, 0.005, 0.01, 0.02, 0.05),
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
