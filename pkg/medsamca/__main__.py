import sys

from medsamca.harness.cli import main

if __name__ == "__main__":
    sys.exit(main())
