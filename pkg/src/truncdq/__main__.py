import sys

from truncdq.cli import main

sys.exit(main())
