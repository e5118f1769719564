"""Particle kind codes shared between the solver modules and the backends."""

FLUID = 0
WALL = 1
INFLOW = 2
OUTFLOW = 3

NAMES = {FLUID: "fluid", WALL: "wall", INFLOW: "inflow", OUTFLOW: "outflow"}
