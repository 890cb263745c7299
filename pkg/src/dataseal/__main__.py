import sys

from dataseal.cli import main

sys.exit(main())
