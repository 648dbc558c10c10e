"""navcost: navigation cost-map pipeline.

Turns a coarse route, a camera view, and a laser scan into a top-view
plausibility/cost map for local planning: route alignment, instruction view
rendering, weakly-supervised labels, Gaussian potential fusion, a pluggable
path generator (geometric oracle included), and the evaluation toolkit.
"""

from . import errors
from .costmap import (
    CostGrid,
    GridSpec,
    KernelParams,
    LaserScan,
    extract_local_path,
    fuse,
    laser_to_cells,
    mask_to_cells,
    read_costgrid,
    write_costgrid,
)
from .evalkit import (
    MetricReport,
    NllReport,
    cover_rate,
    delta_yaw,
    iou,
    patch_l1,
    trajectory_nll,
)
from .geometry import (
    DEFAULT_CAMERA,
    CameraModel,
    GroundPoint,
    PixelCoord,
    Pose2D,
    footprint_to_mask,
    ground_to_pixel,
    pixel_to_ground,
    polyline_yaw,
)
from .label_gen import (
    CropSpec,
    FrameRecord,
    export_dataset,
    import_dataset,
    label_frame,
    random_crop_pair,
)
from .mask import OBSTACLE, TRAVERSABLE, UNKNOWN, PathMask
from .path_oracle import (
    FakeDirection,
    GeneratorInput,
    OracleGenerator,
    fake_instruction,
    load_external_mask,
    oracle_generate,
)
from .route_map import (
    InstructionView,
    MapFrame,
    RoutePointSeq,
    RoutePolyline,
    TrajectorySeq,
    WarpPath,
    crop_instruction,
    discretize_route,
    dtw_align,
    inject_offset,
)
from .simworld import (
    ScanSpec,
    World,
    build_scenario,
    demo_trajectory,
    gt_path_mask,
    simulate_laser,
)

__version__ = "0.1.0"
