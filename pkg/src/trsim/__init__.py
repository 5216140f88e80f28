"""trsim: a desk-scale teach-and-repeat navigation simulator.

Teach a route in a synthetic world, convert it into a topometric pose graph
with point-cloud submaps, repeat it autonomously by registering simulated
LiDAR scans to the submaps with point-to-plane ICP, and evaluate lateral
path-tracking error with both the internal estimator and ground markers.
"""

from .cloud import PointCloud, load_ply, save_ply
from .errors import SimError
from .mapnoise import MapNoiseModel, sample_map_cloud, warp_point, warp_points
from .repeat import (ControllerConfig, IcpParams, IcpResult, RepeatLog,
                     VehicleState, icp_point_to_plane, run_repeat,
                     select_submap, step_vehicle, track_path)
from .se3 import (Transform, Twist, compose, exp_map, interpolate, inverse,
                  log_map, signed_lateral_offset)
from .sensor import LidarModel, simulate_scan
from .teachmap import (PoseGraph, Submap, TeachPath, build_pose_graph,
                       estimate_normals, extract_submaps, load_graph,
                       record_teach, save_graph)
from .world import Marker, World, generate_world, place_markers
from .evaluation import (EvalReport, RelativeReport, compare_repeats,
                         emit_report, estimate_pte, measure_markers)

__version__ = "0.1.0"
