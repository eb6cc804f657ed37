import sys

from seqdelib.cli import main

sys.exit(main())
