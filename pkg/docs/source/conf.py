# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------

project = 'qesdx'
copyright = '2025, qesdx developers'
author = 'qesdx developers'
release = '0.1.0'

# -- General configuration ---------------------------------------------------

extensions = ['autoapi.extension']

templates_path = ['_templates']
exclude_patterns = []

language = 'en'

# -- Options for HTML output -------------------------------------------------

html_theme = 'alabaster'
html_static_path = ['_static']

autoapi_type = 'python'
autoapi_dirs = ['../../qesdx']
autoapi_options = [
	'members',
	'undoc-members',
	'show-inheritance',
	'show-module-summary',
]
autoapi_add_toctree_entry = True
