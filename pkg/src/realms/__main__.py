import sys

from realms.cli import main

sys.exit(main())
