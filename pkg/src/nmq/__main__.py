import sys

from nmq.cli import main

sys.exit(main())
