"""Python access to the qjump unraveling library."""

from ._qjump import QJumpError, divisibility, methods, propagate, run

__all__ = ["QJumpError", "divisibility", "methods", "propagate", "run"]
