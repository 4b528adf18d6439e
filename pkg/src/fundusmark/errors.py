"""Exception types raised by the library."""


class FundusmarkError(Exception):
    """Base class for library errors."""


class LocalizationError(FundusmarkError):
    """An anatomy-localization stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class CapacityError(FundusmarkError, ValueError):
    """The payload does not fit the host subband."""


class SidecarError(FundusmarkError, ValueError):
    """A sidecar metadata file is missing fields or malformed."""
