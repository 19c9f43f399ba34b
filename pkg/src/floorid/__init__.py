"""Floor identification for crowdsourced indoor RF scans.

Given a set of RF scans with exactly one floor-labeled anchor scan, the
pipeline embeds the scans through a weighted bipartite graph, clusters the
embeddings into one group per floor, orders the groups by cross-floor
signal spillover, and assigns every scan a floor number.
"""

__version__ = "0.1.0"
