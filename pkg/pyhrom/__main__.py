import sys

from pyhrom.cli import main

sys.exit(main())
