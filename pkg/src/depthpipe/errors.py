class DepthpipeError(Exception):
    exit_code = 1


class ConfigError(DepthpipeError, ValueError):
    exit_code = 2


class DataError(DepthpipeError):
    exit_code = 3


class FormatError(DataError, ValueError):
    """Malformed container or image file."""
