import sys

from icsplit.cli import main

sys.exit(main())
