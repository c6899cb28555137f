#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# costate_fusion documentation build configuration file.

import os
import sys
import toml
sys.path.insert(0, os.path.abspath('../src'))

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.autosummary',
    'sphinx.ext.mathjax',
    'numpydoc',
    'sphinx_rtd_theme',
    'sphinxcontrib.spelling',
]

autosummary_generate = True
numpydoc_class_members_toctree = False
numpydoc_show_class_members = False
autodoc_member_order = 'bysource'

templates_path = ['_templates']
source_suffix = '.rst'
source_encoding = 'utf-8'
master_doc = 'index'
smartquotes = False
strip_signature_backslash = True

project = 'costate_fusion'
copyright = '2026, costate_fusion contributors'
author = 'costate_fusion contributors'


def get_version():
    with open('../pyproject.toml') as pyproject_file:
        pyproject_data = toml.load(pyproject_file)
    return pyproject_data['project']['version']


version = get_version()
release = version

language = 'en'
exclude_patterns = ['_build']
pygments_style = 'sphinx'
todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_options = {
    'logo_only': False,
    'prev_next_buttons_location': 'top',
    'collapse_navigation': False,
    'sticky_navigation': True,
    'navigation_depth': 3,
    'titles_only': False
}
html_sidebars = {
    '**': [
        'globaltoc.html',
        'relations.html',
        'searchbox.html',
    ]
}
htmlhelp_basename = 'costate_fusiondoc'

# -- Options for other builders -------------------------------------------

latex_documents = [
    (master_doc, 'costate_fusion.tex', 'costate\\_fusion Documentation', author, 'manual'),
]
man_pages = [
    (master_doc, 'costate-fusion', 'costate_fusion Documentation', [author], 1)
]
texinfo_documents = [
    (master_doc, 'costate_fusion', 'costate_fusion Documentation', author, 'costate_fusion',
     'Co-state risk monitoring for powered descents.', 'Miscellaneous'),
]

spelling_config = {
    'lang': 'en_US',
    'filters': ['lowercase'],
    'ignore_pypi_package_names': True,
}
spelling_word_list_filename = 'spelling_wordlist.txt'
