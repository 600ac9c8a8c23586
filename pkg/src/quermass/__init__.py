"""Quermass-interaction germ-grain model: geometry, simulation and Takacs-Fiksel fitting."""
