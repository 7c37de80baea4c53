"""Mnemonic preference pipeline: quality and effectiveness models, labels and exports."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
