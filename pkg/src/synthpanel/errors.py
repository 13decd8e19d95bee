"""Exception hierarchy shared by all synthpanel modules.

Every error carries a ``module`` tag so command-line entry points can
prefix messages with the subsystem that raised them.
"""

from __future__ import annotations


class SynthPanelError(Exception):
    """Base class for all errors raised by this package."""

    module = "synthpanel"


# --- panel ingestion and derived variables ---------------------------------

class PanelError(SynthPanelError):
    module = "panel"


class MissingCell(PanelError):
    """One or more (unit, year, variable) cells absent from a balanced panel.

    ``cells`` holds every missing triple found, not just the first.
    """

    def __init__(self, cells):
        self.cells = tuple(cells)
        shown = ", ".join(f"({u}, {y}, {v})" for u, y, v in self.cells[:8])
        more = "" if len(self.cells) <= 8 else f" and {len(self.cells) - 8} more"
        super().__init__(f"missing cells: {shown}{more}")


class DuplicateRow(PanelError):
    pass


class NonContiguousYears(PanelError):
    pass


class UnknownZoneLabel(PanelError):
    pass


class InsufficientHistory(PanelError):
    pass


class ZeroMinimumMonth(PanelError):
    pass


class UnknownVariable(PanelError):
    pass


class YearOutOfRange(PanelError):
    pass


class UnknownUnit(PanelError):
    """A unit id that does not exist in the dataset or graph at hand."""

    module = "panel"


# --- border regions ---------------------------------------------------------

class RegionError(SynthPanelError):
    module = "regions"


class EmptyBorder(RegionError):
    pass


class EmptyMemberSet(RegionError):
    pass


# --- synthetic control ------------------------------------------------------

class ScmError(SynthPanelError):
    module = "scm"


class DimensionMismatch(ScmError):
    pass


class NoDonors(ScmError):
    pass


class DegeneratePredictors(ScmError):
    pass


# --- inference --------------------------------------------------------------

class InferenceError(SynthPanelError):
    module = "inference"


class InsufficientPrePeriod(InferenceError):
    pass


# --- difference-in-differences ----------------------------------------------

class DidError(SynthPanelError):
    module = "did"


class RankDeficientDesign(DidError):
    """Design matrix is rank deficient; names the collinear columns."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(f"rank-deficient design, collinear columns: {', '.join(self.columns)}")


class EmptyGroup(DidError):
    pass


# --- synthetic data generation ----------------------------------------------

class GeneratorError(SynthPanelError):
    module = "synthgen"


class InvalidSpec(GeneratorError):
    pass
