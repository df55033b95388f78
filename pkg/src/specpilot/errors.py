"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SpecPilotError(Exception):
    """Base class for every domain error raised by specpilot."""


class InvalidArgument(SpecPilotError, ValueError):
    pass


class TransportError(SpecPilotError):
    """A remote backend or executor could not be reached or answered badly."""
