"""Exception hierarchy shared across the package.

ConfigError covers bad specs, plans and unresolvable labels (CLI exit 2);
DataError covers missing or malformed input files (CLI exit 3).
"""


class SceneSimError(Exception):
    pass


class ConfigError(SceneSimError):
    pass


class DataError(SceneSimError):
    pass


class AudioFormatError(DataError):
    """Unsupported or corrupt audio container/codec."""


class CollectionError(DataError):
    """Invalid or unreadable sound-collection manifest."""
