"""Stochastic 2-CSPs from Arthur-Merlin verifiers: circuits, codes, assignment
testers, expander walks and toy protocols, at exhaustively checkable scale."""

__all__ = [
    "__version__",
]

__version__ = "0.1.0"
