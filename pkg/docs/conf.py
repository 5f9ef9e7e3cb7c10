"""Sphinx configuration of the Lodestar documentation."""
import collections.abc
import inspect
import os
import sys

sys.path.insert(0, os.path.abspath('..'))

project = 'Lodestar'
author = 'Lodestar developers'
copyright = '2026, Lodestar contributors'
language = 'en'

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
]

master_doc = 'index'
source_suffix = '.rst'
templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'

autodoc_typehints = 'description'
autodoc_default_options = {
    'member-order': 'groupwise',
    'show-inheritance': True,
    'inherited-members': True,
}
# members inherited from these are noise on the pages of the knowledge types and errors
autodoc_skip_inherited_from = (collections.abc.Sequence, collections.abc.Mapping, BaseException)

html_theme = 'sphinx_rtd_theme'
html_theme_options = {'sticky_navigation': True, 'collapse_navigation': False}
html_show_sourcelink = False
html_static_path = []
htmlhelp_basename = 'lodestardoc'

man_pages = [
    (master_doc, 'lodestar', 'Lodestar: knowledge-enriched image generation', [author], 1),
]


def _owner_of(obj):
    if inspect.isfunction(obj):
        owner = getattr(inspect.getmodule(obj), obj.__qualname__.split('.')[0], None)
        if isinstance(owner, type):
            return owner
    return getattr(obj, '__objclass__', None)


def _skip_inherited(app, what, name, obj, skip, options):
    if _owner_of(obj) in autodoc_skip_inherited_from:
        return True
    return skip


def setup(app):  # noqa: D103
    app.connect('autodoc-skip-member', _skip_inherited)
