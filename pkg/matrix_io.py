"""
Reading and writing of genotype, expression, coefficient and annotation files

Matrices are tab-separated: the first row holds column ids, the first column
holds row ids, and the corner cell names the axis of the header row.
Genotype and expression files are samples-in-rows (corner `snp` / `probe`);
a corner of `sample` marks a file whose header lists samples, which is
transposed on load. Coefficient files are SNPs-in-rows (corner `probe`); a
corner of `snp` marks the transposed layout. Files ending in .gz are
gzip-compressed.
"""

import gzip
import logging
import re
from pathlib import Path

import numpy as np
import pandas as pd

from errors import (DimensionMismatchError, DuplicateIdError, EmptyInputError,
                    MissingValueError, NegativePositionError, NonNumericCellError,
                    MatrixFormatError)
from models import AnnotationTable, Association, CoefficientMatrix, ExpressionMatrix, GenotypeMatrix

logger = logging.getLogger(__name__)

MISSING_TOKENS = {'', 'na', 'nan', 'n/a', 'null', 'none', '.', '-', '?'}
SAMPLE_CORNERS = {'sample', 'samples', 'sample_id'}
SNP_CORNERS = {'snp', 'snps', 'snp_id'}
KINDS = ('genotype', 'expression', 'coefficient')

CORNER_LABELS = {
    GenotypeMatrix: 'snp',
    ExpressionMatrix: 'probe',
    CoefficientMatrix: 'probe',
}


def _read_cells(path):
    """Read a TSV as a grid of strings, rejecting ragged rows"""
    try:
        frame = pd.read_csv(path, sep='\t', header=None, dtype=str, keep_default_na=False,
                            compression='infer', skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise EmptyInputError("File has no content", path=path)
    except pd.errors.ParserError as e:
        # pandas reports rows longer than the header as "Expected N fields in line L, saw M"
        found = re.search(r'Expected (\d+) fields in line (\d+), saw (\d+)', str(e))
        if found:
            width, line_no, seen = (int(v) for v in found.groups())
            raise DimensionMismatchError(f"Row has {seen} field(s), header declares {width}",
                                         path=path, row=line_no, column=width + 1)
        raise DimensionMismatchError(f"Malformed row: {e}", path=path)

    blank = frame.fillna('').apply(lambda column: column.str.strip() == '').all(axis=1)
    frame = frame[~blank]
    if frame.empty:
        raise EmptyInputError("File has no content", path=path)

    # rows shorter than the header come back padded with NaN
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        i = int(np.argmax(short))
        fields = int(frame.iloc[i].notna().sum())
        raise DimensionMismatchError(
            f"Row has {fields} field(s), header declares {frame.shape[1]}",
            path=path, row=i + 1, column=fields + 1)
    return frame.to_numpy(dtype=object)


def _parse_values(body, path, row_ids, col_ids):
    """Convert string cells to floats with per-cell error context"""
    numeric = pd.DataFrame(body).apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    bad = ~np.isfinite(numeric)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        token = str(body[i, j]).strip()
        where = dict(path=path, row=int(i) + 2, column=int(j) + 2)
        if token.lower() in MISSING_TOKENS:
            raise MissingValueError(
                f"Missing value {token!r} for {row_ids[i]} / {col_ids[j]}", **where)
        raise NonNumericCellError(
            f"Non-numeric cell {token!r} for {row_ids[i]} / {col_ids[j]}", **where)
    return numeric


def _check_unique(ids, path, axis, header):
    seen = {}
    for position, identifier in enumerate(ids):
        if identifier in seen:
            if header:
                raise DuplicateIdError(identifier, path=path, row=1, column=position + 2, axis=axis)
            raise DuplicateIdError(identifier, path=path, row=position + 2, column=1, axis=axis)
        seen[identifier] = position


def load_matrix(path, kind):
    """
    Load a validated matrix from a TSV file

    Args:
        path: file path (.tsv or .tsv.gz)
        kind: 'genotype', 'expression' or 'coefficient'

    Returns:
        GenotypeMatrix, ExpressionMatrix or CoefficientMatrix
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")

    cells = _read_cells(path)
    if cells.shape[0] < 2 or cells.shape[1] < 2:
        raise EmptyInputError(f"{kind} file has no data cells", path=path)

    corner = str(cells[0, 0]).strip().lower()
    col_ids = [str(c).strip() for c in cells[0, 1:]]
    row_ids = [str(r).strip() for r in cells[1:, 0]]
    _check_unique(col_ids, path, 'column id', header=True)
    _check_unique(row_ids, path, 'row id', header=False)

    values = _parse_values(cells[1:, 1:], path, row_ids, col_ids)

    if kind == 'coefficient':
        if corner in SNP_CORNERS:
            values, row_ids, col_ids = values.T, col_ids, row_ids
        matrix = CoefficientMatrix(values, row_ids, col_ids)
    else:
        if corner in SAMPLE_CORNERS:
            values, row_ids, col_ids = values.T, col_ids, row_ids
        if kind == 'genotype':
            matrix = GenotypeMatrix(values, snp_ids=col_ids, sample_ids=row_ids)
        else:
            matrix = ExpressionMatrix(values, probe_ids=col_ids, sample_ids=row_ids)

    logger.info(f"Loaded {kind} matrix {values.shape[0]}x{values.shape[1]} from {path}")
    return matrix


def write_tsv(frame, path, index=False, index_label=None):
    """Write a DataFrame as TSV, gzip when the name ends in .gz"""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    options = dict(sep='\t', index=index, index_label=index_label, lineterminator='\n')
    if path.suffix == '.gz':
        # no file name and a zero mtime in the gzip header
        with open(path, 'wb') as raw, gzip.GzipFile(filename='', mode='wb', fileobj=raw, mtime=0) as handle:
            frame.to_csv(handle, mode='wb', encoding='utf-8', **options)
    else:
        frame.to_csv(path, **options)
    logger.debug(f"Wrote {len(frame)} row(s) to {path}")


def read_tsv(path, **kwargs):
    """Read a TSV written by write_tsv"""
    return pd.read_csv(path, sep='\t', compression='infer', **kwargs)


def save_matrix(matrix, path):
    """Write a matrix in the canonical orientation for its type"""
    label = CORNER_LABELS.get(type(matrix))
    if label is None:
        raise TypeError(f"Cannot save object of type {type(matrix).__name__}")
    frame = matrix.to_frame()
    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise EmptyInputError(f"Refusing to save empty {type(matrix).__name__}", path=path)
    write_tsv(frame, path, index=True, index_label=label)


def load_annotations(path):
    """
    Load SNP / probe positions

    Columns: id, chromosome, bp and an optional fourth column kind
    ('snp' or 'probe'). Without a kind column every entry is available for
    both SNP and probe lookups. Whitespace separated; an optional header row
    starts with 'id'.
    """
    try:
        frame = pd.read_csv(path, sep=r'\s+', header=None, dtype=str,
                            keep_default_na=False, compression='infer')
    except pd.errors.EmptyDataError:
        raise EmptyInputError("Annotation file has no content", path=path)
    except pd.errors.ParserError as e:
        raise DimensionMismatchError(f"Malformed annotation row: {e}", path=path)

    first_row = 1
    if len(frame) and str(frame.iat[0, 0]).lower() in {'id', 'snp_id', 'probe_id', '#id'}:
        frame = frame.iloc[1:]
        first_row = 2
    if frame.shape[1] not in (3, 4):
        raise DimensionMismatchError(
            f"Annotation rows need 3 or 4 columns, found {frame.shape[1]}", path=path)

    table = AnnotationTable()
    seen = {'snp': set(), 'probe': set()}
    for offset, row in enumerate(frame.itertuples(index=False)):
        line = first_row + offset
        identifier, chromosome, bp_token = (str(v).strip() for v in row[:3])
        kind = str(row[3]).strip().lower() if len(row) == 4 else None
        try:
            bp = int(bp_token)
        except ValueError:
            raise NonNumericCellError(f"Base-pair position {bp_token!r} is not an integer",
                                      path=path, row=line, column=3)
        if bp < 0:
            raise NegativePositionError(f"Negative base-pair position {bp} for {identifier}",
                                        path=path, row=line, column=3)
        if kind not in (None, 'snp', 'probe'):
            raise MatrixFormatError(f"Unknown annotation kind {kind!r}", path=path, row=line, column=4)

        kinds = [kind] if kind else ['snp', 'probe']
        for k in kinds:
            if identifier in seen[k]:
                raise DuplicateIdError(identifier, path=path, row=line, column=1, axis='annotation id')
            seen[k].add(identifier)
        entry = (chromosome, bp)
        if 'snp' in kinds:
            table.snp_positions[identifier] = entry
        if 'probe' in kinds:
            table.probe_midpoints[identifier] = entry

    logger.info(f"Loaded {len(table.snp_positions)} SNP and {len(table.probe_midpoints)} "
                f"probe position(s) from {path}")
    return table


def save_associations(associations, path):
    """Write an ordered association list"""
    frame = pd.DataFrame([(a.snp_id, a.probe_id, a.effect) for a in associations],
                         columns=['snp_id', 'probe_id', 'effect'])
    write_tsv(frame, path)


def load_associations(path):
    """Read an association list written by save_associations (order preserved)"""
    frame = read_tsv(path, dtype={'snp_id': str, 'probe_id': str})
    missing = {'snp_id', 'probe_id', 'effect'} - set(frame.columns)
    if missing:
        raise MatrixFormatError(f"Association file lacks column(s): {', '.join(sorted(missing))}",
                                path=path)
    return [Association(str(s), str(p), float(e))
            for s, p, e in zip(frame['snp_id'], frame['probe_id'], frame['effect'])]


def save_key_values(values, path):
    """Sidecar metadata as 'key<TAB>value' lines in insertion order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        for key, value in values.items():
            handle.write(f"{key}\t{value}\n")


def load_key_values(path):
    """Sidecar metadata back as a dict of strings"""
    values = {}
    with open(path, 'r', encoding='utf-8') as handle:
        for line in handle:
            line = line.rstrip('\n')
            if not line:
                continue
            key, _, value = line.partition('\t')
            values[key] = value
    return values
