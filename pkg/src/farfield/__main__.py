import sys

from farfield.cli.main import main

sys.exit(main())
