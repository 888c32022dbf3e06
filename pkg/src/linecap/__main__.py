import sys

from linecap.cli import main

sys.exit(main())
