"""plotkit: render verification figures from parakpz report directories.

Reads only the documented CSV/JSON schemas written by the ``parakpz`` CLI
and never recomputes any numerics.
"""

from .figures import FIGURES, SCHEMA_VERSION, SchemaError, render

__version__ = "0.1.0"

__all__ = ["FIGURES", "SCHEMA_VERSION", "SchemaError", "render",
           "__version__"]
