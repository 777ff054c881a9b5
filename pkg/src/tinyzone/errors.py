"""Exception hierarchy shared by every tinyzone component."""


class TinyZoneError(Exception):
    """Base class for all errors raised by tinyzone."""


class ShapeError(TinyZoneError, ValueError):
    pass


class DomainError(TinyZoneError, ValueError):
    pass


class CapacityError(TinyZoneError, ValueError):
    pass


class AddressError(TinyZoneError, IndexError):
    pass


class ProtocolError(TinyZoneError):
    """A command arrived in a state that cannot accept it."""


class ShmCapacityError(TinyZoneError):
    """Payload does not fit in the shared-memory window."""


class IntegrityError(TinyZoneError):
    """Checksum mismatch on decrypted data."""


class FormatError(TinyZoneError, ValueError):
    pass


class ParseError(TinyZoneError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FitError(TinyZoneError, ValueError):
    pass


class ConversionError(TinyZoneError, ValueError):
    pass


class StructureError(ConversionError):
    pass


class MathDomainError(TinyZoneError, ValueError):
    def __init__(self, function, value):
        self.function = function
        self.value = value
        super().__init__(f"{function}: argument {value!r} outside domain")
