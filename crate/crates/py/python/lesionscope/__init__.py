from ._lesionscope import *  # noqa: F401,F403
from ._lesionscope import CtVolume, Mask, Probability

__all__ = [name for name in dir() if not name.startswith("_")]
