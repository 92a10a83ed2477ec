"""Flow-field analysis for gridded ocean data.

Core pieces: a rectilinear grid model with masked fields and trilinear
interpolation, NetCDF/raw ingest, derived fields (speed, vorticity,
strain/rotation balance), persistence-simplified minima, stream/pathline
tracing with several seeding strategies, eddy detection with boundary
search, isovolume surface-front tracking, and vertical profiles. The
`oceanflow` CLI orchestrates the pipelines and exports viewer-ready
VTK/CSV/JSON files.
"""

from .errors import (
    AllZeroWeights,
    DegenerateAxis,
    DimensionMismatch,
    EmptySelection,
    EmptySubset,
    MaskedRegion,
    MissingVariable,
    NoClosedStreamline,
    OceanflowError,
    OutOfDomain,
    TimestepOutOfRange,
    UnsortedAxis,
)
from .grid import (
    EARTH_RADIUS_M,
    Axis,
    Position,
    RectilinearGrid3D,
    ScalarField,
    VectorField,
    interpolate_scalar,
    interpolate_vector,
    locate,
    meters_per_degree,
)
from .ingest import Dataset, VariableMap, open_dataset, write_raw, write_raw_fields
from .fields import (
    DERIVED_FIELD_KINDS,
    curl_magnitude,
    derive,
    okubo_weiss,
    speed,
    vorticity_z,
)
from .topology import Minimum2D, local_minima, persistence_of_minima, simplify_minima
from .tracer import (
    FieldLine,
    IntegrationParams,
    Seed,
    integrate_pathline,
    integrate_streamline,
    seed_in_isovolume,
    seed_uniform,
    seed_weighted,
)
from .eddy import (
    EddyCentre,
    EddyDetectionParams,
    EddyProfile,
    detect_centres,
    detect_eddies_3d,
    eddy_boundary,
    winding_check,
)
from .fronts import (
    IsoVolume,
    SurfaceFront,
    Track,
    TrackGraph,
    build_track_graph,
    extract_isovolume,
    extract_tracks,
    link_fronts,
    surface_fronts,
)
from .profile import (
    DepthMap,
    DepthProfile,
    VerticalSlice,
    depth_profile,
    isosurface_depth,
    vertical_slice,
)

__version__ = "0.1.0"
