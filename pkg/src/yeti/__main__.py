import sys

from yeti.cli import main

sys.exit(main())
