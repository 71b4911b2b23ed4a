"""Exception types. Every failure mode callers are expected to tell apart
gets its own class; messages carry the offending name/index/path."""


class MetricForgeError(Exception):
    """Base class for all errors raised by this package."""


class ContainerError(MetricForgeError):
    """Base class for model-container format errors."""


class BadMagicError(ContainerError):
    """File does not start with the container magic."""


class UnsupportedVersionError(ContainerError):
    """Container format_version is not supported by this reader."""


class ChecksumMismatchError(ContainerError):
    """Payload bytes do not hash to the manifest checksum."""


class TruncatedFileError(ContainerError):
    """File ends before the header or an indexed tensor region."""


class DuplicateTensorError(ContainerError):
    """Two tensors share a name."""


class TensorSizeError(ContainerError):
    """Raw byte length disagrees with dtype and shape."""


class UnknownTensorError(ContainerError, KeyError):
    """Requested tensor name is not in the container."""

    def __str__(self):
        return Exception.__str__(self)


class InterchangeError(MetricForgeError):
    """Interchange directory is malformed; message names the file."""


class VocabularyError(MetricForgeError):
    """Vocabulary file violates the plain-text format."""


class MissingFieldError(MetricForgeError):
    """A record lacks a field its metric kind requires."""

    def __init__(self, field, kind, index=None):
        self.field = field
        self.kind = kind
        self.index = index
        where = "" if index is None else f"record {index}: "
        super().__init__(f"{where}missing field {field!r} required by metric kind {kind!r}")


class ColumnCountError(MetricForgeError):
    """A TSV line has the wrong number of columns for the metric kind."""

    def __init__(self, line_index, expected, got):
        self.line_index = line_index
        self.expected = expected
        self.got = got
        super().__init__(
            f"line {line_index}: expected {expected} tab-separated columns, got {got}"
        )


class KindMismatchError(MetricForgeError):
    """Requested metric kind disagrees with the model manifest."""


class VocabRequiredError(MetricForgeError):
    """Model was given as a bare path, so a vocabulary path is needed too."""


class ClosedEvaluatorError(MetricForgeError):
    """Evaluator was used after close()."""


class EmptyReportError(MetricForgeError):
    """Average mode needs at least one segment score."""


class RegistryError(MetricForgeError):
    """Base class for registry and download errors."""


class UnknownMetricError(RegistryError):
    """Name is neither a local file nor a known metric."""


class DownloadError(RegistryError):
    """HTTP fetch failed or delivered bytes that do not verify."""


class OfflineError(RegistryError):
    """Download needed but offline mode is set."""


class LockTimeoutError(RegistryError):
    """Could not acquire the cache lock within the timeout."""
