"""Dual-path segmentation inference engine, cost analyzer, and bench harness."""

from .analyzer import CostReport, LayerReport, analyze_model, count_layer
from .bench import BenchReport, peak_memory, run_benchmark
from .config import ModelConfig, load_config, save_config
from .data import (
    DatasetSplit,
    SamplePair,
    augment,
    load_image_normalized,
    load_mask,
    pair_dataset,
    split_dataset,
)
from .metrics import (
    SegScores,
    bce_loss,
    binarize,
    combined_loss,
    dice_loss,
    dice_score,
    evaluate_split,
    iou_score,
    loss_grad_logits,
)
from .model import (
    ContextFeatures,
    arm_forward,
    context_path_forward,
    decoder_forward,
    dsconv_block,
    fuse_spatial,
    global_context_forward,
    model_forward,
    spatial_path_forward,
)
from .ops import (
    BnParams,
    ConvSpec,
    Tensor,
    batchnorm_infer,
    bilinear_resize,
    channel_scale,
    concat_channels,
    conv2d,
    elementwise_add,
    fold_bn_into_conv,
    global_avg_pool,
    relu,
    sigmoid,
)
from .weights import BlockWeights, init_weights, load_weights, save_weights

__version__ = "0.1.0"
