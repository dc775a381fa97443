"""Exception hierarchy shared by all geofer modules."""


class GeoferError(Exception):
    """Base class for every error raised deliberately by geofer."""


class FormatError(GeoferError, ValueError):
    """A sequence, manifest or model file does not match its declared format."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DatasetError(GeoferError, ValueError):
    """A dataset or manifest violates one of its invariants."""


class DegenerateGeometryError(GeoferError, ValueError):
    """An angle is undefined because points coincide or are collinear."""


class ConfigError(GeoferError, ValueError):
    """Invalid configuration value."""


class StageError(GeoferError):
    """Wraps an error raised inside one fold of an experiment."""

    def __init__(self, fold, cause):
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")

    def __reduce__(self):
        return (StageError, (self.fold, self.cause))
