#!/usr/bin/env python
"""
Command-line entry point: `python app.py <subcommand> CONFIG [--out DIR]`
or `python app.py --list`.
"""
from app.cli import build_cli

cli = build_cli()


if __name__ == '__main__':
    cli()
