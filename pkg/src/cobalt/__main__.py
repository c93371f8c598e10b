"""Allow ``python -m cobalt``."""

import sys

from .cli import main

sys.exit(main())
