import sys

from platesim.cli_io import main

sys.exit(main())
