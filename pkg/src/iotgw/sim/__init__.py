"""Simulation: virtual clock, in-memory network, nodes, scenario runner."""
