"""Causal-discovery-guided counterfactual dialogue generation and offline
policy learning for persuasive dialogue, with a synthetic oracle world."""

__version__ = "0.1.0"
