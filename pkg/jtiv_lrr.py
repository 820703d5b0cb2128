#!/usr/bin/env python3
"""Command-line entry point.

`python jtiv_lrr.py <subcommand> ...`; the implementation lives in the
`jtiv_lrr` package.
"""

import sys

from jtiv_lrr.cli import main


if __name__ == '__main__':
    sys.exit(main())
