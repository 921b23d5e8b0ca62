"""Backward reach-avoid sets for piecewise-affine planning models."""
