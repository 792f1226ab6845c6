"""Static-site quality checks: link crawling, JSON link scanning, HTML and XML validation."""

from sitecheck._version import __version__
from sitecheck.link_model import (
    Broken,
    CheckStatus,
    Finding,
    LinkRecord,
    Location,
    NormalizedUrl,
    Ok,
    Redirected,
    Report,
    Scope,
    Skipped,
    classify_scope,
    normalize_url,
)

__all__ = [
    "Broken",
    "CheckStatus",
    "Finding",
    "LinkRecord",
    "Location",
    "NormalizedUrl",
    "Ok",
    "Redirected",
    "Report",
    "Scope",
    "Skipped",
    "__version__",
    "classify_scope",
    "normalize_url",
]
