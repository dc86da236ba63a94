from .render import FIGURE_IDS, Episode, FigureSpec, SchemaMismatch, load_episode, render, render_all

__version__ = "0.1.0"
