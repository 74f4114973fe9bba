"""Exception types shared across the toolkit."""


class BolazError(Exception):
    """Base class for all toolkit errors."""


class ParseError(BolazError):
    """Malformed document or SQL text."""


class ValidationError(BolazError):
    """Structurally parseable input that violates a model invariant."""


class UnknownTable(ValidationError):
    pass


class UnknownColumn(ValidationError):
    pass


class UnboundPlaceholder(ValidationError):
    """SQL placeholder with no declared or derivable value source."""


class UnsupportedConstruct(ParseError):
    """SQL construct outside the restricted grammar (OR, subquery, ...)."""


class NotAProducer(BolazError):
    """SELECT projects no resource-ID column, so it defines no interval."""


class DependenciesUnresolved(BolazError):
    """Full-table coverage asked before dependency substitution."""


class KindMismatch(BolazError):
    """Merge attempted between intervals of different resource-ID kinds."""


class DanglingReference(ValidationError):
    """Cross-reference in an app model that does not resolve."""


class DuplicateId(ValidationError):
    pass


class CyclicDependency(BolazError):
    """Interval dependency chain that revisits itself."""


class UnknownEndpoint(BolazError):
    pass


class MissingClaim(BolazError):
    """User context lacks a token claim an interval condition binds to."""


class MissingArg(BolazError):
    """Endpoint invoked without a required parameter."""


class StoreUnavailable(BolazError):
    """Backing store failure; never mapped to an Allow decision."""


class InsufficientSeed(BolazError):
    """Scan requires at least two users owning resources of a kind."""
