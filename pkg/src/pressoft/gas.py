"""Ideal-gas pressure model and the derivation of the pressure bounds."""

from __future__ import annotations

from dataclasses import dataclass

import math

# Molar mass of N2 in kg/mol.
MOLAR_MASS_N2 = 0.0280314
ROOM_TEMPERATURE_K = 288.15
GAS_CONSTANT = 8.3145626

# Gas mass (kg) assigned to each morphology size.
GAS_MASS_KG = {"small": 0.05, "medium": 0.075, "large": 0.1}


@dataclass(frozen=True)
class GasModel:
    """A fixed amount of ideal gas at fixed temperature."""

    gas_mass: float
    molar_mass: float = MOLAR_MASS_N2
    temperature: float = ROOM_TEMPERATURE_K
    gas_constant: float = GAS_CONSTANT

    def __post_init__(self):
        for name in ("gas_mass", "molar_mass", "temperature", "gas_constant"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def amount(self):
        """Amount of substance in mol."""
        return self.gas_mass / self.molar_mass

    @property
    def nrt(self):
        return self.amount * self.gas_constant * self.temperature

    def pressure_from_area(self, area):
        """Pressure of the gas confined to the given area."""
        if area <= 0.0:
            raise ValueError(f"degenerate envelope area {area}")
        return self.nrt / area

    def p_max_for(self, radius):
        """Upper pressure bound: the gas-law pressure at the area of the
        construction circle of the given radius."""
        return self.nrt / (math.pi * radius * radius)
