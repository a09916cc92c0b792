#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
NHDF CR-VANET Simulator 1.0.1

Command-line entry point.
"""

import sys
from pathlib import Path

# Add the project root to PYTHONPATH
PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))


def main(argv=None):
    """Main entry point for nhdf-sim."""
    try:
        from core.application import run_application
    except ImportError as e:
        print(f"Import error: {e}")
        print("Ensure all dependencies are installed:")
        print("  pip install -r requirements.txt")
        return 1
    return run_application(argv)


if __name__ == '__main__':
    sys.exit(main())
