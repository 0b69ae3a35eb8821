"""Allow running the command line interface as ``python -m flexpca``."""

from flexpca.cli import main

if __name__ == "__main__":
    main()
