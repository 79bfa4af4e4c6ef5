"""Exception hierarchy. Every error carries a stable machine ``code``."""


class ParcelFlowError(Exception):
    code = "ERROR"

    def __init__(self, message="", code=None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.message = message

    def __str__(self):
        return f"{self.code}: {self.message}" if self.message else self.code


class ValidationError(ParcelFlowError):
    """Raised with the complete list of violated label rules."""

    code = "VALIDATION"

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class CodecError(ParcelFlowError):
    """BAD_VERSION, BAD_STRUCTURE or BAD_CHECKSUM."""


class ChecksumError(CodecError):
    code = "BAD_CHECKSUM"

    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(f"expected {expected:02X}, found {found}")


class ModelInvalid(ParcelFlowError):
    code = "MODEL_INVALID"


class EmptyGrid(ParcelFlowError):
    code = "EMPTY_GRID"


class UnknownClass(ParcelFlowError):
    code = "UNKNOWN_CLASS"


class EmptyMatrix(ParcelFlowError):
    code = "EMPTY_MATRIX"


class Infeasible(ParcelFlowError):
    code = "INFEASIBLE"


class Ambiguous(ParcelFlowError):
    code = "AMBIGUOUS"

    def __init__(self, solutions):
        self.solutions = solutions
        super().__init__(f"{len(solutions)} diagonal/margin solutions")


class ScenarioInvalid(ParcelFlowError):
    code = "SCENARIO_INVALID"


class UnknownZone(ParcelFlowError):
    code = "UNKNOWN_ZONE"


class DrumLayoutError(ParcelFlowError):
    code = "DUPLICATE_POSITION"


class TrackingError(ParcelFlowError):
    """DUPLICATE_PARCEL, EMPTY_ROUTE, UNKNOWN_PARCEL, OUT_OF_ORDER, STALE_TIMESTAMP."""


class CorruptLogError(ParcelFlowError):
    """A log line failed to parse or apply.

    ``store`` holds the state rebuilt from the valid prefix.
    """

    code = "CORRUPT_LINE"

    def __init__(self, lineno, reason, store=None):
        self.lineno = lineno
        self.store = store
        super().__init__(f"line {lineno}: {reason}")
