"""Instruction-driven placement of an articulated body into labeled scene meshes.

The engine turns an (action, object) instruction into a posed body, a
per-vertex contact probability map, and a physically feasible, energy-optimized
placement inside a semantically labeled scene mesh.
"""

__version__ = "0.1.0"
