"""Exception types shared across the synthesis stack."""


class PbeError(Exception):
    """Base class for every error this package raises on purpose."""


# ---------------------------------------------------------------------------
# evaluation errors
# ---------------------------------------------------------------------------

class EvalError(PbeError):
    """A program failed to evaluate on a state.

    Constraint satisfaction folds these to False: a program that cannot
    run on an example state never satisfies that example.
    """


class UnboundVariable(EvalError):
    pass


class TypeMismatch(EvalError):
    pass


class DomainError(EvalError):
    """Operator rejected its inputs (index out of range, no match, ...)."""


class UnknownOperator(EvalError):
    pass


class ArityMismatch(EvalError):
    pass


# ---------------------------------------------------------------------------
# learning errors
# ---------------------------------------------------------------------------

class LearnError(PbeError):
    pass


class WitnessMissing(LearnError):
    """No witness registered for an (operator, constraint) pair and the
    parameter symbol has no finite fallback."""


class BudgetExceeded(LearnError):
    """Internal signal: the learn deadline passed.

    Callers never see this; learn() catches it and returns a sound,
    incomplete result flagged as such.
    """


class SymbolMismatch(LearnError):
    """A constraint referenced a symbol the current interaction does not know."""


class IncompatibleNamedConstraint(LearnError):
    """A named constraint contradicts what an already-learned field pinned down."""


class EmptyVsa(PbeError):
    """An operation that needs at least one program got an empty space."""


class NotFitted(PbeError):
    """Estimator used before fit()."""


# ---------------------------------------------------------------------------
# interaction errors
# ---------------------------------------------------------------------------

class WrongQuestionKind(PbeError):
    """A score function got a question kind outside its domain."""


class InvalidResponse(PbeError):
    """Response token is not in the question's response set."""


class StaleQuestion(PbeError):
    """The answered question was superseded by a newer round."""


class SessionClosed(PbeError):
    """A failed session accepts only reads."""


class RoundCapExceeded(PbeError):
    """A scripted session hit the round cap without terminating."""
