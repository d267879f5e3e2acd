"""Python face of the concept vector laboratory."""
try:
    from ._cavlab import *  # noqa: F401,F403  wheel layout
except ImportError:
    from _cavlab import *  # noqa: F401,F403  plain cmake build on PYTHONPATH
