import sys

from mlrboost.cli import main

sys.exit(main())
