"""
Evaluation of rankings and association calls

Precision/recall for SNP rankings, precision at k for ordered association
lists, cis / semi-cis / trans classification by SNP-probe distance, hotspot
detection and overlap with a list of known pairs.
"""

import logging
import math
from collections import Counter, defaultdict

import numpy as np
import pandas as pd

from errors import EmptyInputError
from matrix_io import write_tsv
from models import EqtlCall, PrCurve

logger = logging.getLogger(__name__)

CIS_MAX_BP = 250_000
TRANS_MIN_BP = 5_000_000
HOTSPOT_FRACTION = 0.0021
CLASSES = ('cis', 'semi_cis', 'trans', 'unknown')


def _pair(call):
    if hasattr(call, 'snp_id'):
        return call.snp_id, call.probe_id
    return str(call[0]), str(call[1])


def _truth_pairs(truth):
    if hasattr(truth, 'B_true'):
        truth = truth.B_true
    if hasattr(truth, 'nonzero_pairs'):
        return truth.nonzero_pairs()
    return {(str(s), str(p)) for s, p in truth}


# ========== RANKING PRECISION / RECALL ==========

def ranking_pr_curve(rank_order, truth):
    """
    Precision at recall j/A for j = 1..A, A = number of active SNPs

    Precision at recall j/A is j divided by the rank of the j-th active SNP.
    Active SNPs missing from rank_order are placed after its end.

    Args:
        rank_order: SNP ids, best first
        truth: GroundTruth or an iterable of active SNP ids
    """
    active = list(truth.active_snp_ids) if hasattr(truth, 'active_snp_ids') else [str(s) for s in truth]
    if not active:
        raise EmptyInputError("Ground truth has no active SNPs")
    active_set = set(active)

    positions = [i + 1 for i, snp in enumerate(rank_order) if snp in active_set]
    found = {snp for snp in rank_order if snp in active_set}
    missing = sorted(active_set - found)
    positions += [len(rank_order) + i + 1 for i in range(len(missing))]

    total = len(active_set)
    recall = [j / total for j in range(1, total + 1)]
    precision = [j / pos for j, pos in enumerate(positions, start=1)]
    return PrCurve(recall_points=recall, precision_means=precision, n_replicates=1)


def mean_pr_curve(curves):
    """Arithmetic mean of curves sharing the same recall points"""
    curves = list(curves)
    if not curves:
        raise EmptyInputError("No curves to average")
    recall = curves[0].recall_points
    for curve in curves[1:]:
        if len(curve.recall_points) != len(recall) or not np.allclose(curve.recall_points, recall):
            raise ValueError("Curves have different recall points")
    precision = np.mean([c.precision_means for c in curves], axis=0)
    return PrCurve(recall_points=list(recall), precision_means=[float(v) for v in precision],
                   n_replicates=sum(c.n_replicates for c in curves))


def precision_at_recall(curve, recall):
    """Precision at the first recall point >= recall"""
    points = np.asarray(curve.recall_points)
    index = np.flatnonzero(points >= recall - 1e-12)
    if index.size == 0:
        raise ValueError(f"Recall {recall} is beyond the curve")
    return float(curve.precision_means[index[0]])


# ========== ASSOCIATION PRECISION ==========

def association_precision_curve(calls, B_true, K=None):
    """
    precision@k = (# of the first k calls with a true effect) / k, k = 1..K

    Args:
        calls: ordered Association list (or (snp_id, probe_id) pairs)
        B_true: CoefficientMatrix, GroundTruth or set of true pairs
        K: curve length, at most len(calls); all calls when None
    """
    calls = list(calls)
    if K is None:
        K = len(calls)
    if K > len(calls):
        raise ValueError(f"K = {K} exceeds the {len(calls)} available call(s)")
    truth = _truth_pairs(B_true)
    hits = np.array([_pair(c) in truth for c in calls[:K]], dtype=float)
    return np.cumsum(hits) / np.arange(1, K + 1)


def precision_at_k(calls, B_true, k):
    """precision@k, using every call when fewer than k exist"""
    calls = list(calls)
    if not calls:
        return 0.0
    curve = association_precision_curve(calls, B_true, min(k, len(calls)))
    return float(curve[-1])


# ========== CIS / TRANS CLASSIFICATION ==========

def classify_call(snp_id, probe_id, annotations, cis_bp=CIS_MAX_BP, trans_bp=TRANS_MIN_BP):
    """
    Classification and distance of one SNP-probe pair

    Same chromosome: cis below cis_bp, trans above trans_bp, semi_cis in
    between (both bounds strict). Different chromosomes are trans with no
    distance; a missing annotation gives 'unknown'.

    Returns:
        (classification, distance_bp or None)
    """
    snp = annotations.snp_positions.get(snp_id)
    probe = annotations.probe_midpoints.get(probe_id)
    if snp is None or probe is None:
        return 'unknown', None
    if snp[0] != probe[0]:
        return 'trans', None

    distance = abs(int(snp[1]) - int(probe[1]))
    if distance < cis_bp:
        return 'cis', distance
    if distance > trans_bp:
        return 'trans', distance
    return 'semi_cis', distance


def classify_calls(associations, annotations):
    """Annotate an association list with distances and classes"""
    calls = []
    for a in associations:
        classification, distance = classify_call(a.snp_id, a.probe_id, annotations)
        calls.append(EqtlCall(a.snp_id, a.probe_id, a.effect, distance, classification))
    unknown = sum(c.classification == 'unknown' for c in calls)
    if unknown:
        logger.warning(f"{unknown} call(s) lack SNP or probe annotation")
    return calls


def summarize_classifications(calls):
    """Count of calls per class, every class present"""
    counts = Counter(c.classification for c in calls)
    return {name: counts.get(name, 0) for name in CLASSES}


def calls_frame(calls):
    frame = pd.DataFrame([c.to_dict() for c in calls],
                         columns=['snp_id', 'probe_id', 'effect', 'distance_bp', 'classification'])
    frame['distance_bp'] = frame['distance_bp'].astype('Int64')
    return frame


# ========== HOTSPOTS ==========

def hotspot_threshold(q_total, fraction=HOTSPOT_FRACTION):
    """ceil(fraction * q_total)"""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    # rounding first keeps e.g. 0.0021 * 10000 from landing just above 21
    return int(math.ceil(round(fraction * q_total, 9)))


def detect_hotspots(calls, q_total, fraction=HOTSPOT_FRACTION):
    """
    SNPs associated with at least ceil(fraction * q_total) distinct probes

    Returns:
        [(snp_id, sorted probe ids)], most connected first
    """
    threshold = hotspot_threshold(q_total, fraction)
    genes = defaultdict(set)
    for call in calls:
        snp, probe = _pair(call)
        genes[snp].add(probe)

    hotspots = [(snp, sorted(probes)) for snp, probes in genes.items() if len(probes) >= threshold]
    hotspots.sort(key=lambda item: (-len(item[1]), item[0]))
    logger.info(f"{len(hotspots)} hotspot SNP(s) at threshold {threshold} of {q_total} genes")
    return hotspots


# ========== KNOWN-PAIR OVERLAP ==========

def load_known_pairs(path):
    """(snp_id, probe_id) pairs, whitespace separated, optional header starting with snp"""
    try:
        frame = pd.read_csv(path, sep=r'\s+', header=None, dtype=str, usecols=[0, 1],
                            keep_default_na=False, compression='infer')
    except pd.errors.EmptyDataError:
        return set()
    if len(frame) and frame.iat[0, 0].lower() in {'snp', 'snp_id', 'snp_name'}:
        frame = frame.iloc[1:]
    return {(str(s), str(p)) for s, p in zip(frame[0], frame[1])}


def overlap_with_known(calls, known_pairs):
    """
    Exact-pair overlap of an ordered call list with known associations

    Args:
        calls: ordered Association / EqtlCall list or (snp_id, probe_id) pairs
        known_pairs: set of pairs or a path readable by load_known_pairs

    Returns:
        (count, cumulative overlap fraction at each rank prefix)
    """
    if not isinstance(known_pairs, (set, frozenset)):
        known_pairs = load_known_pairs(known_pairs)
    hits = np.array([_pair(c) in known_pairs for c in calls], dtype=float)
    if hits.size == 0:
        return 0, np.zeros(0)
    fractions = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return int(hits.sum()), fractions


# ========== PLOT DATA ==========

def precision_frame(precisions):
    return pd.DataFrame({'k': np.arange(1, len(precisions) + 1), 'precision': precisions})


def overlap_frame(fractions):
    return pd.DataFrame({'rank': np.arange(1, len(fractions) + 1), 'overlap_fraction': fractions})


def save_pr_curve(curve, path):
    write_tsv(curve.to_frame(), path)
