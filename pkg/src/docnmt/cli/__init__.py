"""Command-line entry point."""

from .main import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main
from .manifest import RUN_DIR_ENV, RunDirBusy, RunManifest, locked_run_dir
