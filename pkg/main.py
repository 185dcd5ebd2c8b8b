#!/usr/bin/env python3
"""
main.py – entry point when running from a source checkout.

Equivalent to the installed ``gridjoin`` command:

    python main.py run --gen exp --n 16 --count 20000 --eps 0.05 --k 6 --sortidu
"""

from gridjoin.cli import main

if __name__ == "__main__":
    main()
