"""Similarity-preserving binary codes from detector pseudo-labels.

The pipeline: binarize detection records into label vectors, train a
small network whose signed outputs are the codes, then search and score
with Hamming distance.
"""

from .hashnet import (
    FeatureMatrix,
    ForwardTrace,
    HashModel,
    Layer,
    ModelGrads,
    backward,
    encode,
    encode_all,
    forward,
    init_model,
    load_features,
    load_model,
    save_features,
    save_model,
    sgd_step,
    sign_codes,
)
from .labelspace import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    LabelMatrix,
    SimilarityMatrix,
    build_similarity,
    block_similarity,
    indicator,
    ingest_detections,
    read_class_map,
    similarity,
)
from .metrics import (
    METRIC_NAMES,
    MetricsReport,
    acg_at,
    ap_at,
    dcg_at,
    evaluate,
    format_table,
    ndcg_at,
    precision_at,
    report_records,
    wmap_at,
    write_records,
)
from .objective import (
    LossConfig,
    PairBatch,
    grad_u,
    log1pexp,
    pair_loss,
    pair_loss_sum,
    quant_loss,
    quant_loss_sum,
    sigmoid,
    total_loss,
)
from .retrieval import CodeStore, RankedList, hamming, lsh_encode, pack_signs, search, unpack_signs
from .trainer import (
    STEP_NORM_LIMIT,
    TrainConfig,
    TrainResult,
    clip_grads,
    epoch_batches,
    lr_at,
    train,
)

__version__ = "0.1.0"
