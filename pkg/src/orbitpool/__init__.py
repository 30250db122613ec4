"""Group-invariant global image descriptors via moment pooling over orbits."""

from .core import (
    BinaryHash,
    Descriptor,
    FeatureOrbitTensor,
    euclidean_distance,
    hamming_distance,
    l2_normalize,
)
from .extractor import (
    FeatureMap,
    ToyExtractorConfig,
    assemble_orbit_tensor,
    read_feature_file,
    toy_extract,
    write_feature_file,
)
from .hashing import ThresholdVector, binarize, fit_thresholds
from .orbits import (
    ImageRGB,
    OrbitSpec,
    center_crop_geometric,
    generate_orbit_images,
    rotate_with_padding,
)
from .pooling import (
    Axis,
    Moment,
    PoolingSequence,
    apply_sequence,
    format_sequence,
    moment_reduce,
    parse_sequence,
    pool_axis,
)
from .retrieval import (
    DatasetManifest,
    Protocol,
    RankedList,
    Role,
    average_precision,
    load_manifest,
    mean_average_precision,
    rank,
    recall4_times4,
)

__version__ = "0.1.0"
