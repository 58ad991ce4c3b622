"""Complete concept-by-feature norm matrices from noisy machine answers."""

from ._featnorm import *  # noqa: F401,F403
from ._featnorm import __doc__  # noqa: F401

__version__ = "0.1.0"
