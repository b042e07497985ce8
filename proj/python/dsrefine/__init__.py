"""Influence- and MC-dropout-based training set refinement."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
