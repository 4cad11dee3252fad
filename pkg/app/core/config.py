import os
from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("LIPO_LOG", "INFO").upper()
DEFAULT_SEED = int(os.getenv("LIPO_SEED", "0"))
WORKERS = max(1, int(os.getenv("LIPO_WORKERS", "2")))

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8

FEATURE_FILE_MAGIC = "LIPO-FEATURES"
FEATURE_FILE_VERSION = "v1"
FEATURE_FILE_SUFFIX = ".lipofeat"
VOCAB_MAGIC = b"LIPOVOC1"
IMAGE_SUFFIXES = (".pgm", ".png", ".jpg", ".jpeg", ".ppm", ".bmp", ".tif", ".tiff")
