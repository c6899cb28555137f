"""Allow ``python -m costate_fusion``."""
import sys

from costate_fusion.cli import main

sys.exit(main())
