import sys

from sbrbench.cli import main

sys.exit(main())
