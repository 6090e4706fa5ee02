"""Estimate soccer players' external load while they are outside the broadcast camera view."""
from .config import RunConfig
from .evaluation import EvalReport, SplitPlan, cv, fit_models, predict_models, rmspe, run_experiment
from .exceptions import (ConfigError, GapError, OffscreenError, ParseError, SchemaError,
                         ValidationError)
from .features import FeatureScaler, InteractionExpander, game_features, subtrack_features
from .kinematics import KinematicSeries, derive_kinematics, nw_smooth
from .metrics import (ACCELERATION_BANDS, TARGET_METRICS, VELOCITY_BANDS, Band, LoadMetrics,
                      compute_load_metrics)
from .models import (BaselineLinearModel, BoostedRegressor, FittedModel, ScalingEstimator,
                     load_model, save_model, scaling_estimate, variable_importance)
from .pipeline import CorpusTables, build_tables, censor_corpus
from .synthgen import Corpus, SynthConfig, generate_corpus, write_corpus
from .tracking import (CameraPath, CameraWindow, Event, Frame, PlayerTrack, Subtrack,
                       build_camera_path, censor, parse_events, parse_frames, segment_subtracks)

__version__ = "0.1.0"
