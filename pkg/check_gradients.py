#!/usr/bin/env python3
"""
check_gradients.py

Check adjoint gradients against central finite differences.

Usage:
    python check_gradients.py [--config run.json] [--out DIR] [--section.key value ...]
"""
import sys

from drapekit.cli import main

if __name__ == "__main__":
    sys.exit(main(["gradcheck", *sys.argv[1:]]))
