"""Training side of the effective-capacitance ratio model: consumes the
graph JSONL dataset format and emits weight bundles loadable by the
inference engine."""

__version__ = "0.1.0"
