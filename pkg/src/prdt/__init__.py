"""Consensus protocols as replicated data types.

State is a join-semilattice, protocol steps are query-gated monotone
actions returning deltas, and outcomes are read by monotone decision
functions, so agreement survives any order, duplication, or loss of
message delivery that eventual merging repairs.
"""

__version__ = "0.1.0"
