"""facetsep: blind separation of nonnegative mixtures by facet identification.

The mixing matrix is recovered from the facets of the convex cone generated
by the data rather than from its vertices, so no source needs a stand-alone
peak; sources follow by nonnegative least squares.
"""

from .datamodel import (
    FcaParams,
    PointCloud,
    SeparationResult,
    read_config,
    read_matrix_csv,
    write_matrix_csv,
)
from .denoise import DenoiseSpec, ScalarField, chambolle_rof, distance_field, extract_level_set, knn_smooth, tv_denoise_cloud
from .fca import Group, Hyperplane, fit_hyperplane, group_points, intersect_planes, preprocess, run_fca, select_planes, with_origin
from .hull import Facet, Hull, classify_facets, point_facet_distance, point_vertexset_distance, quickhull
from .metrics import EvalReport, comon_index, match_columns, realized_snr
from .nnls import NnlsReport, recover_sources, solve_nnls
from .baseline import ColumnScore, edge_test, nn_separate, score_columns
from .synth import SourceSpec, add_awgn, gen_mixing, gen_sources, verify_condition

__version__ = "0.1.0"

__all__ = [
    "ColumnScore",
    "DenoiseSpec",
    "EvalReport",
    "Facet",
    "FcaParams",
    "Group",
    "Hull",
    "Hyperplane",
    "NnlsReport",
    "PointCloud",
    "ScalarField",
    "SeparationResult",
    "SourceSpec",
    "add_awgn",
    "chambolle_rof",
    "classify_facets",
    "comon_index",
    "distance_field",
    "edge_test",
    "extract_level_set",
    "fit_hyperplane",
    "gen_mixing",
    "gen_sources",
    "group_points",
    "intersect_planes",
    "knn_smooth",
    "match_columns",
    "nn_separate",
    "point_facet_distance",
    "point_vertexset_distance",
    "preprocess",
    "quickhull",
    "read_config",
    "read_matrix_csv",
    "realized_snr",
    "recover_sources",
    "run_fca",
    "score_columns",
    "select_planes",
    "solve_nnls",
    "tv_denoise_cloud",
    "verify_condition",
    "with_origin",
    "write_matrix_csv",
]
