"""Model adapters: real pretrained models behind the mugcat backend protocol.

Each adapter is a thin FastAPI sidecar that declares truthful capabilities,
loads its checkpoint lazily (load time lands in the caller's
infer-and-load accounting, and is logged), maps per-request failures to
5xx {code, message}, and ignores debug_label_hint. Conformance against the
engine's protocol suite:

    python -m mugcat.conformance http://host:port <stage> --hint-mode ignored
"""

from .config import AdapterConfig
from .server import build_adapter_app, serve_adapter

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "build_adapter_app", "serve_adapter", "__version__"]
