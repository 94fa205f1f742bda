"""Stochastic process model of the sieving pipeline."""
