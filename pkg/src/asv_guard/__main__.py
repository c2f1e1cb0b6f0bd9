# -*- coding: utf-8 -*-

"""ASV Guard Main."""

from asv_guard.cli import main

if __name__ == '__main__':
    main()
