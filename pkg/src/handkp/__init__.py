"""handkp: lightweight 2D hand-keypoint inference engine and evaluation toolkit."""

from .errors import (ArchiveCorruptionError, ConfigurationError, FormatError,
                     HandkpError, InputError)
from .estimator import HandKeypointDetector
from .heatmap import (DecodeParams, Keypoint, KeypointSet, decode_keypoints,
                      find_peaks, make_background_heatmap, make_keypoint_heatmap)
from .metrics import ErrorSample, PckCurve, align_root, auc, epe, pck_curve
from .netgraph import (NetworkConfig, Network, build_network, count_flops,
                       count_parameters, describe, forward)
from .weights_io import (WeightArchive, bind_weights, load_archive,
                         read_archive, save_archive, write_archive)

__version__ = "0.1.0"
