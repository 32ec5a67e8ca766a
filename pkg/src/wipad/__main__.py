import sys

from wipad.cli import main

sys.exit(main())
