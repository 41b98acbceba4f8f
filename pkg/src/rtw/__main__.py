import sys

from rtw.harness.cli import main

sys.exit(main())
