#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Configuración de Sphinx para hjm_finn.

import os
import sys

from recommonmark.parser import CommonMarkParser

project_root = os.path.dirname(os.getcwd())
sys.path.insert(0, project_root)

import hjm_finn  # noqa: E402

on_rtd = os.environ.get('READTHEDOCS', None) == 'True'
if not on_rtd:
    import sphinx_rtd_theme
    html_theme = 'sphinx_rtd_theme'
    html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
else:
    html_theme = 'default'

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode',
              'sphinx.ext.napoleon', 'sphinx.ext.mathjax']
napoleon_numpy_docstring = True

templates_path = ['_templates']
source_parsers = {
    '.md': CommonMarkParser,
}
source_suffix = ['.rst', '.md']
master_doc = 'index'

project = u'hjm_finn'
copyright = u"2026, HJM FINN"
version = hjm_finn.__version__
release = hjm_finn.__version__
language = 'es'

exclude_patterns = ['_build']
pygments_style = 'sphinx'
html_static_path = ['_static']
htmlhelp_basename = 'hjm_finndoc'

latex_documents = [
    ('index', 'hjm_finn.tex', u'Documentación de hjm_finn', u'HJM FINN', 'manual'),
]
man_pages = [
    ('index', 'hjm_finn', u'Documentación de hjm_finn', [u'HJM FINN'], 1),
]
