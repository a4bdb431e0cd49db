"""
Protocol core: blocks, the DAG, the commit rule, the fast path, one
validator's state machine, and the simulator that drives many of them.
"""
