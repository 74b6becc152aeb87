# Configuration file for the Sphinx documentation builder.

import os
import sys
sys.path.insert(0, os.path.abspath('../../src'))

project = 'DMLpy'
copyright = '2026, DMLpy developers'
author = 'DMLpy developers'
release = 'v0.1.0'

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'sphinx.ext.autosectionlabel',
]
autosectionlabel_prefix_document = True
autodoc_mock_imports = ['fire']

templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
source_suffix = '.rst'
master_doc = 'index'
pygments_style = None

html_theme = 'alabaster'
html_theme_options = {
    "logo_name": True,
    "logo_text_align": "left",
    "description": "Simultaneous inference for many debiased targets",
}
html_sidebars = {
    '**': [
        'about.html',
        'navigation.html',
        'relations.html',
        'searchbox.html',
    ]
}
htmlhelp_basename = 'dmlpydoc'

latex_documents = [
    (master_doc, 'dmlpy.tex', 'DMLpy Documentation', author, 'manual'),
]
man_pages = [
    (master_doc, 'dmlpy', 'DMLpy Documentation', [author], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
}
