"""
Main module: entry point for the hierarchical architecture search command line.

Usage: python main.py <command> [options]
"""

import sys

from cli import main

if __name__ == '__main__':
    sys.exit(main())
