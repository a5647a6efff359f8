import sys

from lexishift.cli import main

sys.exit(main())
