"""Topology-first B-rep generation toolkit.

Valid topologies are decoded token by token under constraint masks, geometry
is sampled by a four-stage diffusion cascade conditioned on the topology,
and the two are sewn into watertight solids and scored.
"""

__version__ = "0.1.0"
