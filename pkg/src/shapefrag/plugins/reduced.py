"""Cut single bonds attached to rings, next to carbonyl groups and at C-O/C-N
linkages between heavy-atom groups.
"""

from ..rules import adjacent_to_carbonyl, hetero_linkage
from ..types import Fragmenter


def activate(fragmenter: Fragmenter):
    fragmenter["reduced"].help_text = __doc__ or ""
    fragmenter.register_rule("reduced", adjacent_to_carbonyl)
    fragmenter.register_rule("reduced", hetero_linkage)
