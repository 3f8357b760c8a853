import sys

from relperf.cli import main

sys.exit(main())
