"""Point geometry images: flatten irregular point clouds onto regular 2D grids."""

from .assignment import AssignmentResult, auction_assign, auction_assign_batch
from .csconv import (CsconvParams, FeatureScaler, partition_concentric, regional_embedding,
                     toy_classify)
from .errors import (EmptyInputError, FormatError, InvalidArgumentError, InvalidInputError,
                     ParseError, PgiError, SolverStalledError, TrainingDivergedError)
from .flatten import FlattenModel, TrainConfig
from .geom import (Lattice, PlanarEmbedding, PointCloud, chamfer, decompose, emd_exact, fps,
                   knn, normalize_unit_sphere)
from .io import read_pgi, read_points, write_pgi, write_points
from .metrics import geometry_fidelity, neighborhood_consistency, redundancy
from .pipeline import PRESETS, PipelineConfig, flatten_point_cloud
from .resample import Pgi, pgi_to_points
from .shapes import gen_shape
from .upscale import bicubic_upscale, pgi_bicubic_upscale

__version__ = "0.1.0"
