"""Exception types raised by the loaders and pipeline stages."""


class FlowposeError(Exception):
    """Base class for every error this package raises on purpose."""


class FormatError(FlowposeError, ValueError):
    """A file does not follow its binary or text layout."""


class ParseError(FlowposeError, ValueError):
    """A text record has a field that cannot be parsed."""


class ValidationError(FlowposeError, ValueError):
    """A record parsed fine but violates a domain invariant."""


class DuplicateError(FlowposeError, ValueError):
    """Two inputs claim the same frame index."""


class ContractError(FlowposeError, ValueError):
    """A caller broke an operation's precondition."""
