"""
dagbft - uncertified-DAG Byzantine consensus, a fast path, and a simulator to poke at both
"""

__version__ = "0.1.0"
