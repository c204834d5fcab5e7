"""Exception taxonomy.

Three families, matching the CLI's exit-code contract: contract errors
(malformed inputs or API misuse, exit 2), domain errors (values outside a
function's mathematical domain, exit 2) and numeric errors (failures that
arise during computation, exit 3).
"""


class MdmError(Exception):
    """Base class for all package errors."""


class ContractError(MdmError):
    """An input violates a documented precondition or file contract."""


class DomainError(MdmError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class NumericError(MdmError):
    """A computation failed or produced an unusable result."""


class DegenerateClientError(NumericError):
    """Every mixture component assigns probability zero to a client."""


class PartitionError(MdmError):
    """A partition plan cannot be materialized from the given pool."""
