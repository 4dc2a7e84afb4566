import sys
from pilotwave_study.cli import main

sys.exit(main())
