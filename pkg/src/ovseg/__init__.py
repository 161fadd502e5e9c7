"""Training-free open-vocabulary semantic segmentation.

Dense window-level similarity between a frozen image tower and text prompts,
fused with a saliency map that arbitrates foreground against background.
"""

from .coretypes import (
    IGNORE_INDEX,
    ImageTensor,
    LabelMap,
    SaliencyMap,
    ScoreMap,
    TensorFormatError,
    load_image,
    load_label_png,
    load_saliency_file,
    save_image_png,
    save_label_png,
    tensor_dumps,
    tensor_loads,
    tensor_read,
    tensor_write,
)
from .encoders import (
    BackendError,
    NeuralRuntimeEncoder,
    PrecomputedEncoder,
    StubEncoder,
    encode_image_batch,
    image_content_hash,
    patch_content_key,
    text_content_key,
    write_precomputed_index,
)
from .evalharness import (
    ConfusionMatrix,
    DatasetManifest,
    EvalReport,
    UndefinedMetricError,
    evaluate_dataset,
)
from .fusion import (
    ABLATIONS,
    SegmentationResult,
    build_meta,
    color_palette,
    export_result,
    fuse,
    labels_from_probabilities,
    render_overlay,
    segment,
    softmax_over_classes,
)
from .partitioner import (
    DEFAULT_PATCH_SIZES,
    PatchGrid,
    ScaleConfig,
    extract_patches,
    full_image_grid,
    make_grid,
    resize_bilinear,
    resize_nearest,
    scatter_scores,
    upsample_bilinear,
)
from .pipeline import (
    DenseInferenceConfig,
    MultiScaleResult,
    multiscale_inference,
    prepare_image,
    similarity_map,
)
from .rle import (
    decode_binary_mask,
    decode_label_map,
    encode_binary_mask,
    encode_label_map,
)
from .saliency import (
    ConstantSaliency,
    DirectorySaliency,
    FileSaliency,
    InstanceMaskSet,
    ManifestSaliency,
    NeuralSaliency,
    aggregate_instance_masks,
    load_mask_directory,
    load_saliency,
    make_saliency_provider,
    objectness_weights,
    resize_saliency,
)
from .vocabulary import (
    BACKGROUND,
    DEFAULT_TEMPLATE,
    ClassVocabulary,
    TextEmbeddingMatrix,
    VocabularyError,
    build_vocabulary,
    encode_vocabulary,
    load_vocabulary_file,
    normalize_rows,
    render_prompts,
)

__version__ = "0.1.0"
