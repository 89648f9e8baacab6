#!/usr/bin/env python
from setuptools import setup

# Metadata lives in setup.cfg; kept for legacy editable installs.
setup()
