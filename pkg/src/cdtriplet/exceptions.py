"""Exception hierarchy shared by every module of the package."""


class CDTripletError(Exception):
    """Base class for all errors raised by cdtriplet."""


class ShapeError(CDTripletError, ValueError):
    pass


class InputError(CDTripletError, ValueError):
    pass


class ConfigError(CDTripletError, ValueError):
    pass


class FormatError(CDTripletError, ValueError):
    """A checkpoint or bank file does not match the declared binary layout."""


class CapacityError(CDTripletError):
    """No distinct triplet constellations are left to sample."""


class DatasetError(CDTripletError):
    pass


class SpecError(ConfigError):
    pass


class SplitError(DatasetError):
    pass


class DivergenceError(CDTripletError, FloatingPointError):
    pass


class BankError(CDTripletError, ValueError):
    pass


class StaleBankError(BankError):
    """The reference bank was built with a different encoder than the one queried."""


class LabelError(CDTripletError, ValueError):
    pass
