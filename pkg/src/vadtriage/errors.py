"""Exception hierarchy shared across the package.

Every error carries a stable ``code`` (snake_case class name) so the HTTP
layer and CLI can report structured failures without string matching.
"""

import re


class VadTriageError(Exception):
    """Base class for all domain errors."""

    @property
    def code(self) -> str:
        name = type(self).__name__
        return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()


# -- ingestion -------------------------------------------------------------

class MissingColumn(VadTriageError):
    pass


class DuplicateId(VadTriageError):
    pass


class UnparsableRow(VadTriageError):
    pass


class UnresolvedParcel(VadTriageError):
    pass


class BadDate(VadTriageError):
    pass


class InvalidRecord(VadTriageError):
    """A domain type invariant was violated at construction time."""


# -- feature engineering ---------------------------------------------------

class MixedCategories(VadTriageError):
    pass


class SpecialExceedsTotal(VadTriageError):
    pass


# -- forest ----------------------------------------------------------------

class EmptyTraining(VadTriageError):
    pass


class NoOobRows(VadTriageError):
    pass


class TooFewRowsPerClass(VadTriageError):
    pass


# -- sampling --------------------------------------------------------------

class PoolTooSmall(VadTriageError):
    pass


class EmptyPool(VadTriageError):
    pass


class UntrainedModel(VadTriageError):
    pass


class MixInvalid(VadTriageError):
    pass


# -- audit -----------------------------------------------------------------

class AlreadyResolved(VadTriageError):
    pass


class UnknownConflict(VadTriageError):
    pass


# -- interpretation --------------------------------------------------------

class TooFewFeatures(VadTriageError):
    pass


class EmptyGrid(VadTriageError):
    pass


# -- evaluation ------------------------------------------------------------

class EmptyValidation(VadTriageError):
    pass


class EmptyOutput(VadTriageError):
    pass


class SingularDesign(VadTriageError):
    pass


# -- synthesis -------------------------------------------------------------

class ConfigInvalid(VadTriageError):
    pass


# -- session ---------------------------------------------------------------

class DatasetMissing(VadTriageError):
    pass


class PoolExhausted(VadTriageError):
    pass


class BadAssignment(VadTriageError):
    pass


class NotAssigned(VadTriageError):
    pass


class DuplicateSubmission(VadTriageError):
    pass


class SessionClosed(VadTriageError):
    pass


class NoLabels(VadTriageError):
    pass


class SingleClass(VadTriageError):
    pass


class NotTrained(VadTriageError):
    pass


class RoundStateError(VadTriageError):
    pass


# -- spreadsheets ----------------------------------------------------------

class MalformedSheet(VadTriageError):
    pass


class UnknownParcelColumn(VadTriageError):
    pass


class BadLabelToken(VadTriageError):
    pass
