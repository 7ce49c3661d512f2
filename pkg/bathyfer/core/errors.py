from typing import Optional


class BathyferError(Exception):
    """Root of every error raised by the package."""


class InputError(BathyferError, ValueError):
    pass


class ParseError(InputError):
    """Malformed measurement file; ``row`` is the 1-based data row."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(InputError):
    pass


class DomainError(InputError):
    pass


class ExtrapolationError(InputError):
    pass


class ImpossibleInitError(InputError):
    """Chain start with zero posterior density."""

    def __init__(self, message: str, chain_index: int = 0):
        self.chain_index = chain_index
        super().__init__(message)


class FitError(BathyferError):
    pass


class CalibrationError(BathyferError):
    pass


class NumericalError(BathyferError):
    pass


class StabilityError(NumericalError):
    def __init__(self, cfl: float, wave_speed: float, t: float):
        self.cfl = cfl
        self.wave_speed = wave_speed
        self.t = t
        super().__init__(
            f"CFL number {cfl:.3f} at t={t:.4f}s exceeds the stability limit "
            f"(max wave speed {wave_speed:.4f} m/s)"
        )


class DivergenceError(NumericalError):
    pass


class InferenceError(BathyferError):
    """All chains failed or were discarded; ``diagnostics`` holds per-chain details."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
