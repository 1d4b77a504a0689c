"""Sparse spatio-temporal moving-vehicle detection for satellite video.

The pipeline: temporal-median background subtraction, adaptive-threshold
sampling into a sparse point cloud, a sparse-convolutional anchor-free
detector, SORT trajectory filtering, and a label self-evolution training
loop, with distance-based evaluation and benchmarking.
"""

__version__ = "0.1.0"

from .config import RunConfig                                    # noqa: E402
from .data import (BoxLabel, FrameClip, LabelStore, SynthConfig,  # noqa: E402
                   load_clip, load_labels, save_clip, save_labels,
                   synth_video)
from .background import (ResidualClip, compute_residuals,         # noqa: E402
                         subtract_background, temporal_median)
from .sampling import (PointCloud, ThresholdParams,               # noqa: E402
                       adaptive_threshold, connected_components,
                       sample_points)
from .detector import (Detection, DetectionSet, Detector,         # noqa: E402
                       HeadOutput, LossWeights, TrainTargets, decode,
                       detection_loss, infer_video, render_targets, train)
from .tracker import (KalmanTrack, TrackSet, TrackerConfig,       # noqa: E402
                      associate, filter_tracks, track_video)
from .evolution import (EvolutionState, evolve_labels,            # noqa: E402
                        make_initial_labels, run_framework,
                        traditional_detect)
from .evaluation import (EvalReport, bench, f1_score,             # noqa: E402
                         match_frame, score)
