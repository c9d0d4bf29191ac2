#!/usr/bin/env python3
"""
optimize_pattern.py

Co-optimize cage handles, material and body against a target garment.

Usage:
    python optimize_pattern.py [--config run.json] [--out DIR] [--section.key value ...]
"""
import sys

from drapekit.cli import main

if __name__ == "__main__":
    sys.exit(main(["optimize", *sys.argv[1:]]))
