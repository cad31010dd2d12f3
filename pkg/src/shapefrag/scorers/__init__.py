"""Scorers speaking the ``shapefrag`` scorer protocol: SDF records on standard input,
one decimal score per record on standard output (lower is better), exit code 0.
"""
