"""Topology inference against rooted spanning tree embeddings in F2F overlays."""

__version__ = "0.1.0"
