"""Mixture-of-experts routing for triangle meshes.

A transformer gate reads random walks over a mesh and weights a pool of
experts; the weighted diversity loss and a pairwise similarity loss are
balanced by a coefficient that a soft actor-critic agent retunes every
training iteration.
"""

__version__ = "0.1.0"
