"""Python bindings for the hmrk body-recovery library."""

from ._core import *  # noqa: F401,F403
from ._core import HmrkError, __version__  # noqa: F401
