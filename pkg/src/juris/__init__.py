"""Legal case retrieval: latent charge/element inference plus multi-view evidence fusion."""

from juris.errors import DataError

__version__ = "0.1.0"

__all__ = ["DataError", "__version__"]
