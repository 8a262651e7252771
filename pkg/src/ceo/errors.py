"""Error type shared by every module.

Each failure carries a stable ``code`` (``E_PARSE``, ``E_CYCLE``, ...) so the
CLI can map it to an exit status and tests can assert on it without matching
message text.
"""


class CEOError(ValueError):
    """A data or contract violation, tagged with a stable error code."""

    def __init__(self, code, message=""):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}" if message else code)


class ConfigError(CEOError):
    """Invalid pipeline configuration (unknown key, bad value)."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__("E_CONFIG", message)
