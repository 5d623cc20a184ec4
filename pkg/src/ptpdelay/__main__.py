import sys

from ptpdelay.cli import main

sys.exit(main())
