"""Exception types shared by the slice model, the engines and the harness."""


class SimError(Exception):
    """Base class for every error raised by dsp48sim."""


class StimulusError(SimError, ValueError):
    """A test vector is malformed: out-of-range value or wrong shape."""


class ConfigError(SimError, ValueError):
    """An engine or slice configuration is inconsistent."""


class SchedulingError(SimError, RuntimeError):
    """An operation was issued at a point where the schedule forbids it."""
