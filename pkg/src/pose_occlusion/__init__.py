"""Occlusion attacks, targeted occlusion augmentation and keypoint evaluation
for 2D human pose estimation."""
from .augment import AugmentPolicy, AugmentResult, Donor, augment_dataset, augment_instance, instance_rng
from .heatmap import HeatmapStack, decode, encode
from .imaging import BlurParams, Circle, Rect, blur_region, crop_affine, fill_region, min_rect, read_image, write_png
from .metrics import EvalResult, OksParams, PckResult, ap_summary, oks, per_joint_ap, pckh
from .occlusion import OcclusionSpec, attack_dataset, occlude_keypoint, occlude_part, radius_sweep
from .report import SensitivityReport, build_report, sweep_table, topk_affected
from .schema import (
    COCO,
    MPII,
    ParseError,
    PersonInstance,
    PoseDataset,
    PredictionRecord,
    PredictionSet,
    SkeletonSchema,
    ValidationError,
    parse_dataset,
    parse_predictions,
    write_dataset,
    write_predictions,
)

__version__ = "0.1.0"
