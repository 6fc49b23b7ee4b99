"""Refinement-law engine for timed, state-rich mission models.

Parses mission specifications, applies a catalog of proviso-guarded rewrite
laws, and validates every step against a bounded discrete-time trace
semantics on finite instances.
"""

__version__ = "0.1.0"
