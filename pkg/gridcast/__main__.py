import sys

from gridcast.cli import main

if __name__ == "__main__":
    sys.exit(main())
