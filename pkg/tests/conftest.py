import os

# keep unit tests single-process unless a test asks otherwise
os.environ.setdefault("NICHE_WORKERS", "1")
