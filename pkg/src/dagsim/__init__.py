"""Discrete-event simulator of a DAG-based ledger with Approval Weight consensus."""

__version__ = "0.1.0"
