"""Python bindings for the hierarchical world-model agent."""

try:
    from director_rl._core import *  # noqa: F401,F403
    from director_rl._core import __version__  # noqa: F401
except ImportError:  # build-tree layout: _core.so next to the package dir
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
