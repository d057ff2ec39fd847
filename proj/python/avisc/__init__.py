"""Attention-calibrated contrastive decoding toolkit.

The heavy lifting lives in the C++ extension module; this package
re-exports its surface.
"""

from ._avisc import *  # noqa: F401,F403
from ._avisc import __version__  # noqa: F401
