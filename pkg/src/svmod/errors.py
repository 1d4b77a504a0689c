"""Exception and warning types shared across the pipeline."""


class SvmodError(Exception):
    """Base class for all svmod errors."""


class MissingFrame(SvmodError):
    """A requested frame index has no image file on disk."""


class ShapeMismatch(SvmodError):
    """Array shapes disagree (frame sizes, residual vs. background, channels)."""


class ParseError(SvmodError):
    """Malformed row in a label/detection CSV; message carries the line number."""


class InvalidConfig(SvmodError):
    """A configuration value violates a module precondition."""


class InvalidKernel(SvmodError):
    """Kernel geometry not supported (e.g. even submanifold kernel)."""


class GraphStale(SvmodError):
    """A tensor recorded on the autodiff tape was mutated before backward()."""


class Diverged(SvmodError):
    """Training loss became non-finite."""


class EmptyCloudWarning(UserWarning):
    """No pixel passed the adaptive threshold in any frame of a clip."""
