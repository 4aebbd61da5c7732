"""Simulators for limit cycles in the driven-dissipative anisotropic
Heisenberg lattice: Gutzwiller mean field, Born-truncated self-consistent
Mori projector, cluster mean field, trajectory analysis, an exact
small-lattice oracle, and a CLI front end."""

__version__ = "0.1.0"
