"""Inter-traffic-aware placement of network function instances on a server pool."""

__version__ = "0.1.0"
