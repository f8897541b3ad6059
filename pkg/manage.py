#!/usr/bin/env python
"""Command-line utility for PathGAN experiments."""
import os
import sys


def main():
    """Run an experiment command."""
    # Add the current directory to Python path
    sys.path.append(os.path.dirname(os.path.abspath(__file__)))
    try:
        from pathgan.commands import main as run_command
    except ImportError as exc:
        raise ImportError(
            "Couldn't import pathgan. Are its requirements installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    sys.exit(run_command(sys.argv[1:]))


if __name__ == '__main__':
    main()
