"""Exception types shared across the package."""


class SchemaError(ValueError):
    """Malformed model/dataset document, or a name/id outside the declared universe."""


class ContractError(ValueError):
    """Caller violated an operation precondition."""


class BudgetExceeded(RuntimeError):
    """A bounded search hit its resource cap; raised instead of returning a wrong answer."""
