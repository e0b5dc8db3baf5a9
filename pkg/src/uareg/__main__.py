import sys

from uareg.cli import main

sys.exit(main())
