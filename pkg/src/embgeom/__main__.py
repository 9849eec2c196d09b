"""Allow ``python -m embgeom``."""

import sys

from .cli import main

sys.exit(main())
