# Sphinx configuration for the interference-lab documentation.
import os
import sys

sys.path.insert(0, os.path.abspath('../'))

project = 'Interference Lab'
copyright = '2026, Interference Lab developers'
author = 'Interference Lab developers'

__version__ = None
exec(open("../interference_lab/version.py").read())
release = __version__

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.mathjax']
autodoc_member_order = 'bysource'
autodoc_mock_imports = ['matplotlib']

templates_path = ['_templates']
exclude_patterns = []

html_theme = 'default'
html_static_path = ['_static']
html_sidebars = {'**': ['globaltoc.html', 'relations.html', 'sourcelink.html', 'searchbox.html']}
