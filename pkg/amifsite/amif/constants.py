"""
Shared constants for the AMIF application.
Centralizes defaults, file-format magic values and user-facing messages.
"""

# Backbone defaults (4 blocks, 8 heads, 64 feature dimensions, 256x256 inputs)
DEFAULT_NUM_BLOCKS = 4
DEFAULT_NUM_HEADS = 8
DEFAULT_FEAT_DIM = 64
DEFAULT_IMAGE_SIZE = 256
DEFAULT_FFN_EXPANSION = 2.0
DETAIL_COUPLING_NODES = 3
INIT_STD = 0.02

# Dense blocks (residual-dense style)
DENSE_LAYERS = 3
DENSE_GROWTH = 32
DENSE_KERNEL = 3
LEAKY_SLOPE = 0.2

# Watermark memory
MEMORY_SLOTS = 64
STEM_CHANNELS = 32
TOKEN_GRID = 16
WATERMARK_HEADS = 1
WATERMARK_SOURCES = ('memory', 'static')

# Coupling
DEFAULT_COUPLING_BLOCKS = 4
MIN_COUPLING_BLOCKS = 1
MAX_COUPLING_BLOCKS = 8
DEFAULT_ALPHA_SCALE = 2.0
MAX_ALPHA_SCALE = 4.0
DELTA_MIN = 0.1
DELTA_MAX = 1.9
SE_REDUCTION = 4
SPATIAL_KERNEL = 7

# Loss weights (alpha1..alpha5) and epsilons
LOSS_WEIGHTS = (10.0, 2.0, 100.0, 0.1, 0.1)
DECOMP_EPSILON = 1.01
DICE_EPSILON = 1e-6

# Training protocol
DEFAULT_EPOCHS = 200
DEFAULT_BATCH_SIZE = 2
DEFAULT_LR = 1e-4
DEFAULT_LR_DECAY = 0.5
DEFAULT_LR_STEP_EPOCHS = 100
ADAM_BETAS = (0.9, 0.999)
GRAD_CLIP_NORM = 10.0
DEFAULT_SEED = 0

# Data
SPLITS = ('train', 'val', 'test')
MODALITY_A_DIR = 'modal_a'
MODALITY_B_DIR = 'modal_b'
SPLITS_DIR = 'splits'
WATERMARK_LABEL_FILE = 'watermark.png'
IMAGE_EXTENSIONS = ('.png',)
LABEL_FRACTION_RANGE = (0.02, 0.25)
LABEL_CANVAS = 64
WATERMARK_TEXT = 'AMIF'

# Degradations standing in for removal attacks
DEGRADATION_KINDS = ('gaussian_blur', 'median', 'noise')
BLUR_SIGMA = 2.0
MEDIAN_SIZE = 5
NOISE_SIGMA = 0.05
# Label evidence 3*I_wf - (a + b) recovers the label where the output meets its target
LABEL_EVIDENCE_THRESHOLD = 0.5

# Metrics
VIF_SCALES = 4
VIF_NOISE_VARIANCE = 2.0
QABF_GAMMA_G, QABF_KAPPA_G, QABF_SIGMA_G = 0.9994, -15.0, 0.5
QABF_GAMMA_A, QABF_KAPPA_A, QABF_SIGMA_A = 0.9879, -22.0, 0.8
SSIM_K1, SSIM_K2, SSIM_SIGMA = 0.01, 0.03, 1.5
METRIC_FIELDS = ('sf', 'mi', 'vif', 'qabf', 'ssim')

# Key file (bit-exact layout)
KEY_MAGIC = b'AMIFKEY1'
KEY_FORMAT_VERSION = 1
KEY_FINGERPRINT_BYTES = 16
KEY_DTYPE_FLOAT32 = 0
KEY_EXTENSION = '.amifkey'

# Checkpoint archive
CHECKPOINT_FORMAT = 'amif-npz-1'
CHECKPOINT_CONFIG_ENTRY = '__config__'
CHECKPOINT_FORMAT_ENTRY = '__format__'


class ExitCodes:
    """Process exit codes shared by every management command."""
    SUCCESS = 0
    VALIDATION = 1
    AUTHENTICATION = 2
    NUMERIC = 3


# Error messages
class ErrorMessages:
    """Centralized error messages for consistency."""
    ODD_DIMENSION = "Wavelet input needs even {axis} size, got {size}."
    BAND_MISMATCH = "Wavelet bands must share one shape, got {shapes}."
    SHAPE_MISMATCH = "Shape mismatch: {left} vs {right}."
    WRONG_IMAGE_SIZE = "Expected spatial size {expected}x{expected}, got {height}x{width}."
    WRONG_CHANNELS = "Expected {expected} channels, got {actual}."
    NON_FINITE = "Non-finite values in {name}."
    NON_FINITE_LOSS = "Loss term '{term}' is not finite at step {step}."
    EMPTY_BLOCKS = "At least one coupling block is required."
    EMPTY_TOKENS = "Attention needs at least one token on each side."
    BAD_COUNT = "{name} must be positive, got {value}."
    BAD_LABEL = "Watermark label must be binary (0/1)."
    UNKNOWN_DEGRADATION = "Unknown degradation '{kind}'; use one of {kinds}."
    UNKNOWN_CONFIG_KEYS = "Unknown config keys: {keys}."
    MISSING_PATH = "Path does not exist: {path}."
    EMPTY_SPLIT = "Split '{split}' has no usable pairs."
    UNPAIRED_FILE = "No partner for '{name}' in {folder}."
    OUTPUT_EXISTS = "Refusing to overwrite {path} without --force."
    KEY_TRUNCATED = "Key file is truncated or corrupted."
    KEY_BAD_MAGIC = "Not an AMIF key file."
    KEY_CHECKSUM = "Key checksum mismatch: the key file is corrupted."
    KEY_VERSION = "Unsupported key format version {version}."
    KEY_DTYPE = "Unsupported key payload dtype code {code}."
    KEY_FINGERPRINT = "Key belongs to checkpoint {key_fp}, not {model_fp}."
    KEY_SHAPE = "Key payload shape {key_shape} does not fit {expected_shape}."
    BAD_CHECKPOINT = "Checkpoint {path} is not an AMIF archive."
    CONFIG_INVALID = "Invalid configuration: {reason}."


# Success messages
class SuccessMessages:
    """Centralized success messages for consistency."""
    FUSED = 'Fused "{pair}" -> {image} (key {key}).'
    RECOVERED = 'Recovered watermark-free image -> {image}.'
    EVALUATED = 'Evaluated {count} pairs -> {csv}.'
    TRAINED = 'Training finished after {steps} steps -> {checkpoint}.'
    FIXTURE = 'Wrote {count} pairs per split under {root}.'
