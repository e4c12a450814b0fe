import sys

from starswipt.main import cli_main

sys.exit(cli_main())
