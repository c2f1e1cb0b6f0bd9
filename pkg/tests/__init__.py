# -*- coding: utf-8 -*-

"""Tests for ASV Guard."""
