"""OSSI signal physics, manifold dictionaries, and near-manifold regularized
reconstruction with dynamic R2* quantification."""

__version__ = "0.1.0"

from .encode import EncodingOp, KSpaceData, SamplingPattern, SensitivityMaps
from .manifold import (
    CauchyGrid,
    Dictionary,
    DictionaryGrid,
    VoxelParams,
    build_dictionary,
    cauchy_grid,
    voxel_signal,
)
from .physics import IsochromatParams, SequenceParams, quadratic_phase, simulate_isochromat
from .quantify import QuantMaps, VoxelEstimate, quantify_image, regularizer_value, varpro_match
from .recon import (
    LowRankConfig,
    OssimmConfig,
    ReconResult,
    reconstruct_cgsense,
    reconstruct_lowrank,
    reconstruct_ossimm,
)

__all__ = [
    "CauchyGrid", "Dictionary", "DictionaryGrid", "EncodingOp", "IsochromatParams",
    "KSpaceData", "LowRankConfig", "OssimmConfig", "QuantMaps", "ReconResult",
    "SamplingPattern", "SensitivityMaps", "SequenceParams", "VoxelEstimate", "VoxelParams",
    "build_dictionary", "cauchy_grid", "quadratic_phase", "quantify_image",
    "reconstruct_cgsense", "reconstruct_lowrank", "reconstruct_ossimm", "regularizer_value",
    "simulate_isochromat", "varpro_match", "voxel_signal",
]
