"""Hand pointing gesture detection and pointing-direction estimation.

The pipeline runs per frame: background subtraction (codebook or Kalman),
skin segmentation from a forehead color template, blob selection, fingertip
detection on the hand contour and three pointing-direction estimates.
"""
from .app import ConfigError, FrameResult, Pipeline, PipelineConfig, run_pipeline
from .background import (CodebookModel, Codeword, KalmanBackground, KalmanParams, KalmanPixelState,
                         LightChangePolicy, LightChangeReport, codebook_match, codebook_train,
                         kalman_update, light_change_update, subtract_frame)
from .contour import Cog, Contour, Moments, area, moments_cog, resample, trace_contour
from .geometry import Defect, Hull, convex_hull, convexity_defects, k_curvature_angle, point_line_distance
from .harness import EvalReport, evaluate
from .imgcore import HsvPixel, InputError, rgb_to_hsv, rgb_to_normalized_rgb, to_gray
from .pointing import (BodyAssignment, FingertipCandidate, PointingDecision, PointingParams,
                       classify_pointing, corner_candidates, dominant_fingertip, hull_defect_fingertips,
                       orientation, select_body_blobs)
from .skin import (Blob, Rect, SkinHistogram, backproject, binarize, build_histogram, connected_components,
                   forehead_from_face, skin_posterior)
from .synth import SceneTruth, SyntheticScene, generate_scene

__version__ = "0.1.0"
