"""Extractor-specific failure: a requested backbone cannot run here."""


class BackboneUnavailableError(RuntimeError):
    """Weights or optional dependencies for a backbone are missing.

    The message always names the fix (extra to install, cache to populate),
    never a bare import trace.
    """
