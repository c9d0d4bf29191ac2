#!/usr/bin/env python3
"""
synth_target.py

Generate a synthetic target garment from known parameters.

Usage:
    python synth_target.py [--config run.json] [--out DIR] [--section.key value ...]
"""
import sys

from drapekit.cli import main

if __name__ == "__main__":
    sys.exit(main(["synth-target", *sys.argv[1:]]))
