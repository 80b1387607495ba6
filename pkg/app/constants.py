# ** Asymmetric siamese network defaults
SPATIAL_RATES = [0, 6, 12]
MULTIPLIERS = [16, 32, 64]
CHANNEL_PARAMS = [1, 2, 3, 4, 5]
KERNEL_SIZE = 3
TAU = 0.5
GAMMA = 0.5
LOSS_ALPHA = 1.0
LOSS_BETA = 1.0

# ** Optimizer ("poly" policy)
BASE_LR = 0.005
POLY_POWER = 0.9
MOMENTUM = 0.9
WEIGHT_DECAY = 0.0001

# ** Training schedule
BASE_EPOCHS = 50
ATL_EPOCHS = 20
AUG_SCALE_RANGE = (0.5, 2.0)
FLIP_PROBABILITY = 0.5
TRAIN_CROP = 64

# ** Test-time augmentation
TTA_SCALES = [0.5, 0.75, 1.0, 1.25, 1.5, 1.75]

# ** Numerics
NORM_EPS = 1e-5
DEGENERATE_EPS = 1e-12
FD_STEP = 1e-5

# ** SECOND annotation scheme, 0 is the blackened non-change label
SECOND_CLASSES = [
    "non-vegetated ground surface",
    "tree",
    "low vegetation",
    "water",
    "buildings",
    "playgrounds",
]
NON_CHANGE_COLOR = (255, 255, 255)
SECOND_PALETTE = [
    (128, 128, 128),
    (0, 255, 0),
    (0, 128, 0),
    (0, 0, 255),
    (128, 0, 0),
    (255, 0, 0),
]

DATASET_DIRS = ("im1", "im2", "label1", "label2")
PREVIEW_DIR = "preview"
MANIFEST_FILE = "manifest.json"
MANIFEST_VERSION = 1

# ** CLI exit codes
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
