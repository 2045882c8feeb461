import sys

from friedrichs_mor.cli import main

sys.exit(main())
