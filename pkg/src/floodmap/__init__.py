"""Flood-extent mapping pipeline.

Index baselines (NDWI, Otsu), random-forest label propagation from one
expert-annotated tile, crop dataset export for downstream training, and a
segmentation-metrics suite, all runnable on synthetic scenes with known
ground truth.
"""

__version__ = "0.1.0"

from .raster import (  # noqa: F401
    FEATURE_BANDS,
    Grid,
    Mask,
    Raster,
    crop,
    read_grid_file,
    read_mask_file,
    resample_bilinear,
    stack,
    write_grid_file,
    write_mask_file,
)
from .terrain import DemGrid, StreamMask, hand_simplified, slope_from_dem  # noqa: F401
from .indices import (  # noqa: F401
    NdwiParams,
    OtsuResult,
    ThresholdDirection,
    apply_threshold,
    ndwi,
    otsu_threshold,
)
from .forest import (  # noqa: F401
    Forest,
    ForestParams,
    SampleMatrix,
    best_split,
    feature_importance,
    fit_forest,
    gini_impurity,
    load_forest,
    predict_forest,
    predict_raster,
    save_forest,
)
from .metrics import (  # noqa: F401
    ConfusionMatrix,
    MetricsReport,
    confusion,
    f1_from_iou,
    scores,
)
from .dataset import (  # noqa: F401
    Crop,
    DatasetManifest,
    HwmPoint,
    export_dataset,
    make_crops,
    read_dataset,
    read_hwm_csv,
    sample_tiles,
    split_train_test,
    stratified_pixel_sample,
)
from .synth import SynthParams, SynthScene, expert_tile, generate_scene  # noqa: F401
