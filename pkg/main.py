# affectdan entry point: `python main.py <command> ...` from the project root.
import os
import sys

SRC_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "src")
if SRC_DIR not in sys.path:
    sys.path.insert(0, SRC_DIR)

from affectdan.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
