"""Entry point for python -m bdrylib."""

import sys

from bdrylib.cli.main import main

sys.exit(main())
