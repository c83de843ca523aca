"""Shear strain, force, contact location and edge direction from tactile sensor images.

The sensor shows a grid of colored quadrilaterals. Junctions between quads
form the control net of a B-spline surface; the summed distance between the
sampled surfaces of a deformed and a reference image gives the shear strain.
"""
from .bspline import BSplineSurface, SampledSurface, eval_surface, sample_surface, surface_from_net
from .errors import (DegenerateError, DomainError, GridDegenerateError, ImageIOError,
                     IncompatibleInputsError, InvalidInputError, NoContactError, NoDetectionError,
                     TactileError)
from .geometry import ControlGrid, sort_into_grid
from .imaging import CameraModel, undistort_fisheye
from .pipeline import Extraction, PipelineConfig, analyze, extract, strain_between
from .strain import (CalibrationModel, StrainReport, edge_orientation_pca, fit_calibration,
                     force_from_strain, localize_contact, shear_strain)

__version__ = "0.1.0"

__all__ = [
    "BSplineSurface", "CalibrationModel", "CameraModel", "ControlGrid", "DegenerateError",
    "DomainError", "Extraction", "GridDegenerateError", "ImageIOError", "IncompatibleInputsError",
    "InvalidInputError", "NoContactError", "NoDetectionError", "PipelineConfig", "SampledSurface",
    "StrainReport", "TactileError", "analyze", "edge_orientation_pca", "eval_surface", "extract",
    "fit_calibration", "force_from_strain", "localize_contact", "sample_surface", "shear_strain",
    "sort_into_grid", "strain_between", "surface_from_net", "undistort_fisheye",
]
