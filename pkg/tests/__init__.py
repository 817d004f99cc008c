# Test package for affectdan.
# Run from the project root: `python -m unittest discover -s tests -t .`
# Slow end-to-end checks run only with AFFECTDAN_SLOW_TESTS=1.

import os
import sys

SRC_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
if SRC_DIR not in sys.path:
    sys.path.insert(0, SRC_DIR)

SLOW_TESTS = os.environ.get("AFFECTDAN_SLOW_TESTS", "") == "1"
