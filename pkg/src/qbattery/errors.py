"""Exception types raised by the numerical routines."""


class QBatteryError(Exception):
    """Base class for model and numerical failures."""


class IncommensurateFrequencies(QBatteryError):
    pass


class NonConvergence(QBatteryError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class NoRoot(QBatteryError):
    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class BandSelectionAmbiguous(QBatteryError):
    pass


class SingularModeMatrix(QBatteryError):
    pass


class WrongN(QBatteryError):
    pass
