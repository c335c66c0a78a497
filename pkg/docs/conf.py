# Sphinx configuration for the pyhrom documentation.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

from pyhrom import __version__  # noqa: E402

project = 'pyhrom'
author = 'pyhrom developers'
copyright = f'2026, {author}'
release = __version__

extensions = ['sphinx.ext.autodoc']
master_doc = 'index'
exclude_patterns = ['_build']

autodoc_member_order = 'bysource'
autodoc_typehints = 'none'

html_theme = 'sphinx_rtd_theme'
