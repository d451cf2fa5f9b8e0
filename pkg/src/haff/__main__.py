import sys

from haff.cli import main

sys.exit(main())
