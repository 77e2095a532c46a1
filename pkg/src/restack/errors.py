"""Typed errors raised by the ordering pipeline.

Callers are expected to branch on these types: connectivity and assembly
failures carry enough state to fall back to partial results.
"""

from __future__ import annotations


class RestackError(Exception):
    """Base class for all package errors."""


class SelfQuery(RestackError):
    """An oracle was asked to compare an item with itself."""

    def __init__(self, item: int):
        super().__init__(f"oracle queried with identical items ({item}, {item})")
        self.item = item


class DisconnectedGraph(RestackError):
    """An operation that requires a connected graph saw a disconnected one."""


class ConnectivityStalled(RestackError):
    """Connectivity search exhausted its round budget before spanning.

    Carries the surviving components so callers can order each fragment
    independently instead of aborting outright.
    """

    def __init__(self, components: list[list[int]], rounds: int):
        super().__init__(
            f"connectivity stalled after {rounds} rounds with "
            f"{len(components)} components"
        )
        self.components = components
        self.rounds = rounds


class AssemblyIncomplete(RestackError):
    """Chain assembly ran out of usable edges before reaching one chain.

    Carries the assembled fragments, ordered internally, so partial output
    can still be written.
    """

    def __init__(self, chains: list[list[int]]):
        super().__init__(
            f"assembly finished with {len(chains)} fragments instead of 1"
        )
        self.chains = chains


class IsolatedVertex(RestackError):
    """A vertex with no incident edges where at least one is required."""

    def __init__(self, vertex: int):
        super().__init__(f"vertex {vertex} has no incident edges")
        self.vertex = vertex


class NotAnEndpoint(RestackError):
    """A chain operation addressed a vertex that is not a chain endpoint."""

    def __init__(self, vertex: int):
        super().__init__(f"vertex {vertex} is not a chain endpoint")
        self.vertex = vertex


class LengthMismatch(RestackError):
    """Two sequences that must describe the same items differ in length."""


class DisconnectedSimilarity(RestackError):
    """A dense similarity matrix describes a disconnected graph."""


class InputFormatError(RestackError):
    """A similarity CSV or config file failed validation.

    line_no is 1-based; 0 means the problem is not tied to a single line.
    """

    def __init__(self, message: str, line_no: int = 0):
        super().__init__(message if not line_no else f"line {line_no}: {message}")
        self.line_no = line_no
