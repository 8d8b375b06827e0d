"""
CLI Entry Point for rerf

Installed as the `bench` console script. The thread count of a run can be
capped without touching its config through the RERF_NUM_THREADS
environment variable.
"""

import sys
from typing import Optional, Sequence

from .main import Main


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point function for setuptools console_scripts."""
    return Main.run(argv)


if __name__ == "__main__":
    sys.exit(main())
