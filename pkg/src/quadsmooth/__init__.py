"""Piecewise quadratic approximation of planar maps and its smoothing
into a diffeomorphism, with sampled verification of every step."""

from .analysis import injectivity_test, jacobian_scan, linf_diff, singular_measure, w21_error
from .edge import EdgeBlend, EdgeBlendParams, edge_blend_eval, select_edge_params, verify_edge
from .geometry import Jet2, eta, fd_jet
from .maps import MapSpec
from .mesh import ClassificationParams, ConstantsEstimate, TriGrid, build_grid, classify_squares, estimate_constants
from .pipeline import Report, RunConfig, run_approximate, run_smooth
from .piecewise import PiecewiseQuadraticMap, SmoothedMap, interpolate_grid
from .quadmap import MapSource, QuadraticMap, build_interpolant, edge_jump
from .svg import render_svg
from .vertex import VertexBlendParams, VertexFan, select_vertex_params, tilde_f_eval, vertex_blend_eval, verify_vertex

__version__ = "0.1.0"
