"""Block-scrambling image encryption for encryption-then-compression
pipelines: conventional RGB and grayscale-composite schemes, a baseline-JPEG
adapter, an SNS recompression simulator, a jigsaw-solver attack harness, and
the matching evaluation metrics."""

__version__ = "0.1.0"

from .core import (
    BlockGeometry,
    BlockScrambleError,
    CodecError,
    GeometryError,
    KeyFormatError,
    RasterImage,
    Scheme,
    SizeCapError,
    assemble_blocks,
    block_count,
    split_into_blocks,
)
from .keystream import (
    KeySet,
    KeystreamContext,
    Purpose,
    derive_subkeys,
    gen_color_perms,
    gen_d4_codes,
    gen_neg_flags,
    gen_permutation,
    generate_master_key,
)
from .cipher import (
    CipherConfig,
    Orientation,
    TransformSpec,
    apply_d4,
    build_transform_spec,
    d4_inverse,
    decrypt_conventional,
    decrypt_grayscale,
    decrypt_image,
    encrypt_conventional,
    encrypt_grayscale,
    encrypt_image,
    estimate_keyspace,
    from_grayscale_composite,
    negative_positive,
    shuffle_colors,
    to_grayscale_composite,
)
from .codec import (
    JpegParams,
    JpegStreamInfo,
    Subsampling,
    decode_jpeg,
    encode_jpeg,
    estimate_quality,
    ijg_quant_tables,
    parse_jpeg_info,
)
from .sns import (
    Provider,
    RecompressionDecision,
    SnsPolicy,
    decide,
    make_policy,
    simulate,
)
from .attack import (
    AssemblyResult,
    MetricsReport,
    Side,
    SolverMode,
    attack_single,
    attack_trial_protocol,
    direct_comparison,
    greedy_assemble,
    largest_component,
    neighbor_comparison,
    pairwise_compatibility,
    psnr,
    render_assembly,
    truth_assembly,
)
