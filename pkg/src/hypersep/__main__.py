import sys

from hypersep.cli import main

sys.exit(main())
