from ..types import Fragmenter


def activate(fragmenter: Fragmenter):
    """Only cut acyclic single bonds with at least one endpoint in a ring"""
    fragmenter["ring_only"].help_text = activate.__doc__ or ""
