"""Gated linear RNN language models for small-corpus pretraining."""

from ._core import *  # noqa: F401,F403
from ._core import BabyHgrnError, __doc__  # noqa: F401

__version__ = "0.1.0"
