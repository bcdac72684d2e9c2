"""
Exception types for the eQTL mapping tools
"""


class EqtlError(Exception):
    """Base class for all errors raised by this package"""


class MatrixFormatError(EqtlError):
    """A matrix or table file does not conform to the expected format"""

    def __init__(self, message, path=None, row=None, column=None):
        self.path = str(path) if path is not None else None
        self.row = row
        self.column = column
        context = []
        if self.path:
            context.append(self.path)
        if row is not None:
            context.append(f"row {row}")
        if column is not None:
            context.append(f"column {column}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)


class DimensionMismatchError(MatrixFormatError):
    """Row/column counts disagree with the header or with a paired matrix"""


class DuplicateIdError(MatrixFormatError):
    """An identifier appears more than once on one axis"""

    def __init__(self, duplicate_id, path=None, row=None, column=None, axis='id'):
        self.duplicate_id = duplicate_id
        super().__init__(f"Duplicate {axis}: {duplicate_id}", path=path, row=row, column=column)


class NonNumericCellError(MatrixFormatError):
    """A cell could not be parsed as a finite decimal number"""


class MissingValueError(MatrixFormatError):
    """A cell is empty or holds a missing-value token such as NA"""


class EmptyInputError(MatrixFormatError):
    """A matrix or table has no rows or no columns"""


class NegativePositionError(MatrixFormatError):
    """An annotation carries a negative base-pair position"""


class NonFiniteInputError(EqtlError):
    """A numeric kernel received NaN or infinite entries"""


class DegenerateDesignError(EqtlError):
    """A genotype column is constant or the sample size is too small"""


class ConfigError(EqtlError):
    """A configuration file or setting is invalid"""
