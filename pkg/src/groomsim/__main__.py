import sys

from groomsim.cli import main

sys.exit(main())
