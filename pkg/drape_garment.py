#!/usr/bin/env python3
"""
drape_garment.py

Drape a sewing pattern onto a body and export the equilibrium mesh.

Usage:
    python drape_garment.py [--config run.json] [--out DIR] [--section.key value ...]
"""
import sys

from drapekit.cli import main

if __name__ == "__main__":
    sys.exit(main(["drape", *sys.argv[1:]]))
