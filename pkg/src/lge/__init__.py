"""Reward-free exploration on continuous mazes.

Latent go-explore with a jointly learned latent representation, plus the
cell-based and random baselines it is measured against.
"""

__version__ = "0.1.0"
