"""Block-sparse face recognition with locally adaptive dictionaries and
discriminative tree-structured graphical models."""

from .classify import (
    BlockDecision,
    SoftScores,
    block_decision,
    block_identity,
    block_layout,
    face_regions,
    majority_vote,
    ml_fuse,
    src_global,
    uniform_grid,
)
from .dictionary import (
    LabeledTrainingSet,
    LocalDictionary,
    SearchWindow,
    build_binary_dictionary,
    build_global_dictionary,
    build_local_dictionary,
    with_error_atoms,
)
from .graphs import (
    PairwiseGaussianStats,
    ThickenedGraphPair,
    TreeGraph,
    boost_thicken,
    chow_liu,
    discriminative_tree_pair,
    fit_pairwise_stats,
    infer_class,
    llr,
    mwst,
    reject_outlier,
    tree_log_density,
)
from .harness import (
    ExperimentConfig,
    MetricsReport,
    emit_report,
    roc_auc,
    roc_sweep,
    run_pipeline,
    split_dataset,
)
from .imaging import (
    BlockSpec,
    GrayImage,
    corrupt_pixels,
    downsample,
    extract_block,
    load_pgm,
    save_pgm,
    warp,
)
from .meta import MetaSample, SvmModel, meta_classify, train_svm
from .solver import SparseCode, class_residuals, omp, sci

__version__ = "0.1.0"
