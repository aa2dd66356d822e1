"""Error types raised across the pipeline."""

from pathlib import Path


class CascadeNerfError(Exception):
    """Base class for all errors raised by cascade_nerf."""


class ConfigError(CascadeNerfError):
    """Invalid or unknown configuration key."""

    def __init__(self, key: str, reason: str) -> None:
        self.key = key
        self.reason = reason
        super().__init__(f"config key '{key}': {reason}")


class UsageError(CascadeNerfError):
    """An operation was called with arguments that violate its contract."""


class ShapeMismatchError(UsageError):
    """A tape node received inputs of the wrong shape."""

    def __init__(self, node: str, expected: str, actual: str) -> None:
        self.node = node
        self.expected = expected
        self.actual = actual
        super().__init__(f"shape mismatch at node '{node}': expected {expected}, got {actual}")


class NonFiniteError(CascadeNerfError, OverflowError):
    """A value became NaN or infinite."""

    def __init__(self, where: str, detail: str = "") -> None:
        self.where = where
        message = f"non-finite value in '{where}'"
        super().__init__(f"{message}: {detail}" if detail else message)


class PixelRangeError(UsageError, IndexError):
    """Pixel coordinates fall outside the image."""

    def __init__(self, u: int, v: int, width: int, height: int) -> None:
        self.u = u
        self.v = v
        super().__init__(f"pixel ({u}, {v}) outside {width}x{height} image")


class DatasetError(CascadeNerfError):
    """A dataset file is missing or malformed."""

    def __init__(self, path: Path | str, reason: str) -> None:
        self.path = Path(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class PoseValidationError(DatasetError):
    """A camera pose is not a rigid transform."""


class IntegrityError(CascadeNerfError):
    """Persisted artifacts disagree with their manifest."""


class IncompatibleParamsError(CascadeNerfError):
    """Warm-start parameters do not fit the target architecture."""

    def __init__(self, name: str, reason: str) -> None:
        self.name = name
        super().__init__(f"parameter '{name}': {reason}")


class MissingPromptBankError(UsageError):
    """A prompted checkpoint was used without a prompt bank."""

    def __init__(self, stage: int) -> None:
        self.stage = stage
        super().__init__(
            f"checkpoint of stage {stage} is prompt-conditioned and requires a prompt bank (--prompts)"
        )
