"""Exception hierarchy shared across the scanner.

Every error the engine raises on purpose derives from ScanError so the CLI
can map failures to exit codes without matching on strings.
"""

from __future__ import annotations


class ScanError(Exception):
    """Base class for all scanner-raised errors."""


class ConfigError(ScanError):
    """Scan configuration is missing, malformed, or self-contradictory."""


class SpecParseError(ScanError):
    """The API description document cannot be turned into an inventory."""


class ScopeViolation(ScanError):
    """A request was about to leave the configured target scope."""


class CredentialError(ScanError):
    """Login was rejected or returned no usable token."""


class TokenNotHonoredError(ScanError):
    """Login succeeded but the issued token fails the verification probe."""


class TokenFormatError(ScanError):
    """A token does not have the three-segment structure forging needs."""


class CanarySeedError(ScanError):
    """No canary could be planted in any self-created resource."""


class PrerequisiteError(ScanError):
    """A family agent cannot run because the run lacks an input it needs."""


class BundleSchemaError(ScanError):
    """An evidence bundle is missing fields its family's rule requires."""


class GroundTruthError(ScanError):
    """A ground-truth manifest fails schema validation."""
