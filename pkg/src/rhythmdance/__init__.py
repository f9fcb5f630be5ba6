"""Music-conditioned dance token generation with phase rhythm features,
temporal-gated causal attention and parallel selective state-space stacks."""

__version__ = "0.1.0"
