"""Joint Bayesian structure learning of related networks arranged in a rooted tree."""

__version__ = "0.1.0"
