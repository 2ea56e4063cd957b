"""Priority-typed session calculus: terms, processes, and the translation
between them, with typecheckers, small-step evaluators, and a test kit."""

__version__ = "0.1.0"
