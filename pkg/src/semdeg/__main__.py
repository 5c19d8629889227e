import sys

from semdeg.cli import main

sys.exit(main())
