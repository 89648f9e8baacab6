import sys

from .cli import main

__all__ = ["main"]


# test with: python -m pfadvantage
if __name__ == "__main__":
    sys.exit(main())
