"""Exception hierarchy shared by all oceanflow modules."""


class OceanflowError(Exception):
    """Base class for all errors raised by this package."""


class OutOfDomain(OceanflowError):
    """A position lies outside the grid's coordinate bounding box."""


class MaskedRegion(OceanflowError):
    """An interpolation stencil touches invalid (land or missing) nodes."""


class MissingVariable(OceanflowError):
    """A mapped variable is absent from the backing file."""


class DimensionMismatch(OceanflowError):
    """A file variable does not have the expected dimensions."""


class UnsortedAxis(OceanflowError):
    """A coordinate axis is not strictly monotonically increasing."""


class TimestepOutOfRange(OceanflowError):
    """A timestep index is outside the dataset's time range."""


class EmptySubset(OceanflowError):
    """A subset request selects no grid nodes or timesteps."""


class DegenerateAxis(OceanflowError):
    """An axis is too short for the requested stencil."""


class AllZeroWeights(OceanflowError):
    """A seeding weight field has no positive weight anywhere."""


class EmptySelection(OceanflowError):
    """Rejection sampling exhausted its candidate budget without a hit."""


class NoClosedStreamline(OceanflowError):
    """No probe radius produced a closed or spiralling streamline."""
