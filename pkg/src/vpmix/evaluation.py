"""Frame- and note-level transcription metrics in the style of mir_eval.

Four metric families are reported: frame activity, notes matched on onset,
notes matched on onset and offset, and notes matched on onset, offset and
velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .midi import NoteList, PianoRoll, notes_to_piano_roll

FAMILIES = ("frame", "note_onset", "note_offset", "note_offset_velocity")
CRITERIA = ("onset", "onset+offset", "onset+offset+velocity")

# time differences are rounded before comparison so that e.g. 1.05 - 1.00 counts as 0.05
_N_DECIMALS = 7


@dataclass(frozen=True)
class MatchConfig:
    onset_tol_s: float = 0.05
    offset_min_tol_s: float = 0.05
    offset_ratio: float = 0.2
    velocity_tol: float = 0.1
    frame_hop_s: float = 0.032

    def __post_init__(self):
        for name in ("onset_tol_s", "offset_min_tol_s", "offset_ratio", "velocity_tol", "frame_hop_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, n_match: int, n_est: int, n_ref: int) -> "PRF":
        p = n_match / n_est if n_est else 0.0
        r = n_match / n_ref if n_ref else 0.0
        return cls(p, r, f_measure(p, r))


def f_measure(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class MetricReport:
    frame: PRF
    note_onset: PRF
    note_offset: PRF
    note_offset_velocity: PRF | None
    counts: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        """Flat ``{family}_{precision|recall|f1}`` mapping; disabled families map to None."""
        out = {}
        for fam in FAMILIES:
            prf = getattr(self, fam)
            for stat in ("precision", "recall", "f1"):
                out[f"{fam}_{stat}"] = None if prf is None else getattr(prf, stat)
        return out

    def values(self) -> list:
        return list(self.to_dict().values())


# -- matching --


def _onset_valid(ref: NoteList, est: NoteList, cfg: MatchConfig) -> np.ndarray:
    same_pitch = ref.pitches[:, None] == est.pitches[None, :]
    dist = np.round(np.abs(ref.onsets[:, None] - est.onsets[None, :]), _N_DECIMALS)
    return same_pitch & (dist <= cfg.onset_tol_s)


def _offset_valid(ref: NoteList, est: NoteList, cfg: MatchConfig) -> np.ndarray:
    durations = ref.offsets - ref.onsets
    tol = np.maximum(cfg.offset_min_tol_s, cfg.offset_ratio * durations)
    dist = np.round(np.abs(ref.offsets[:, None] - est.offsets[None, :]), _N_DECIMALS)
    return dist <= tol[:, None]


def velocity_calibration(ref: NoteList, est: NoteList, candidates: np.ndarray) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` mapping estimated velocities onto
    min-max normalized reference velocities, fitted over all candidate pairs."""
    r_idx, e_idx = np.nonzero(candidates)
    ref_v = ref.velocities.astype(float)
    lo, hi = ref_v.min(), ref_v.max()
    ref_norm = (ref_v - lo) / max(1.0, hi - lo)
    x = est.velocities.astype(float)[e_idx]
    A = np.column_stack([x, np.ones_like(x)])
    slope, intercept = np.linalg.lstsq(A, ref_norm[r_idx], rcond=None)[0]
    return float(slope), float(intercept)


def valid_pairs(ref: NoteList, est: NoteList, cfg: MatchConfig, criteria: str = "onset") -> np.ndarray:
    """Boolean ``(len(ref), len(est))`` matrix of pairs that satisfy ``criteria``."""
    if criteria not in CRITERIA:
        raise ValueError(f"criteria must be one of {CRITERIA}, got {criteria!r}")
    if len(ref) == 0 or len(est) == 0:
        return np.zeros((len(ref), len(est)), dtype=bool)
    valid = _onset_valid(ref, est, cfg)
    if criteria == "onset":
        return valid
    valid &= _offset_valid(ref, est, cfg)
    if criteria == "onset+offset" or not valid.any():
        return valid
    slope, intercept = velocity_calibration(ref, est, valid)
    ref_v = ref.velocities.astype(float)
    ref_norm = (ref_v - ref_v.min()) / max(1.0, ref_v.max() - ref_v.min())
    mapped = slope * est.velocities.astype(float) + intercept
    err = np.abs(mapped[None, :] - ref_norm[:, None])
    return valid & (err <= cfg.velocity_tol)


def _maximum_matching(valid: np.ndarray, ref: NoteList, est: NoteList) -> set:
    if not valid.any():
        return set()
    # columns ordered by onset distance inside each row so the chosen matching is reproducible
    rows, cols = np.nonzero(valid)
    dist = np.abs(ref.onsets[rows] - est.onsets[cols])
    order = np.lexsort((cols, dist, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=valid.shape[0]))])
    graph = csr_matrix((np.ones(rows.size), cols, indptr), shape=valid.shape)
    match = maximum_bipartite_matching(graph, perm_type="column")
    return {(int(r), int(c)) for r, c in enumerate(match) if c >= 0}


def match_notes(ref: NoteList, est: NoteList, cfg: MatchConfig | None = None, criteria: str = "onset") -> set:
    """Maximum-cardinality one-to-one matching of ``(ref_idx, est_idx)`` pairs."""
    cfg = cfg or MatchConfig()
    return _maximum_matching(valid_pairs(ref, est, cfg, criteria), ref, est)


def note_prf(ref: NoteList, est: NoteList, matching) -> PRF:
    return PRF.from_counts(len(matching), len(est), len(ref))


# -- frames --


def _frame_counts(ref_roll: PianoRoll, est_roll: PianoRoll) -> tuple[int, int, int]:
    if not np.isclose(ref_roll.hop_s, est_roll.hop_s, rtol=1e-12, atol=0):
        raise ValueError(f"piano rolls use different hops: {ref_roll.hop_s} vs {est_roll.hop_s}")
    n = max(ref_roll.n_frames, est_roll.n_frames)
    ref = np.zeros((n, ref_roll.activity.shape[1]), dtype=bool)
    est = np.zeros_like(ref)
    ref[:ref_roll.n_frames] = ref_roll.activity
    est[:est_roll.n_frames] = est_roll.activity
    tp = int(np.count_nonzero(ref & est))
    fp = int(np.count_nonzero(est & ~ref))
    fn = int(np.count_nonzero(ref & ~est))
    return tp, fp, fn


def frame_prf(ref_roll: PianoRoll, est_roll: PianoRoll) -> PRF:
    """Cell-wise precision/recall over (frame, pitch); the shorter roll is zero-padded."""
    tp, fp, fn = _frame_counts(ref_roll, est_roll)
    return PRF.from_counts(tp, tp + fp, tp + fn)


# -- top level --


def evaluate(ref: NoteList, est: NoteList, cfg: MatchConfig | None = None, with_velocity: bool = True) -> MetricReport:
    """All four metric families for one piece."""
    cfg = cfg or MatchConfig()
    hop = cfg.frame_hop_s
    # one spare frame so float rounding in end / hop can never drop the last active frame
    n_frames = int(np.floor(max(ref.end_s, est.end_s) / hop)) + 2
    tp, fp, fn = _frame_counts(notes_to_piano_roll(ref, hop, n_frames), notes_to_piano_roll(est, hop, n_frames))

    m_on = match_notes(ref, est, cfg, "onset")
    m_off = match_notes(ref, est, cfg, "onset+offset")
    m_vel = match_notes(ref, est, cfg, "onset+offset+velocity") if with_velocity else None
    counts = {
        "n_ref": len(ref), "n_est": len(est),
        "match_onset": len(m_on), "match_offset": len(m_off),
        "match_velocity": None if m_vel is None else len(m_vel),
        "frame_tp": tp, "frame_fp": fp, "frame_fn": fn,
    }
    return MetricReport(
        frame=PRF.from_counts(tp, tp + fp, tp + fn),
        note_onset=note_prf(ref, est, m_on),
        note_offset=note_prf(ref, est, m_off),
        note_offset_velocity=None if m_vel is None else note_prf(ref, est, m_vel),
        counts=counts,
    )


def mean_report(reports: list) -> dict:
    """Piece-averaged flat metrics (each piece weighs the same)."""
    if not reports:
        raise ValueError("no reports to aggregate")
    flat = [r.to_dict() for r in reports]
    out = {}
    for key in flat[0]:
        vals = [f[key] for f in flat]
        out[key] = None if any(v is None for v in vals) else float(np.mean(vals))
    return out


def pooled_report(reports: list) -> dict:
    """Micro-averaged flat metrics from summed counts (each note/cell weighs the same)."""
    if not reports:
        raise ValueError("no reports to aggregate")
    tot = {k: sum(r.counts[k] for r in reports) for k in
           ("n_ref", "n_est", "match_onset", "match_offset", "frame_tp", "frame_fp", "frame_fn")}
    vel = [r.counts["match_velocity"] for r in reports]
    frame = PRF.from_counts(tot["frame_tp"], tot["frame_tp"] + tot["frame_fp"], tot["frame_tp"] + tot["frame_fn"])
    onset = PRF.from_counts(tot["match_onset"], tot["n_est"], tot["n_ref"])
    offset = PRF.from_counts(tot["match_offset"], tot["n_est"], tot["n_ref"])
    velocity = None if any(v is None for v in vel) else PRF.from_counts(sum(vel), tot["n_est"], tot["n_ref"])
    return MetricReport(frame, onset, offset, velocity).to_dict()


_HEADER_GROUPS = (("frame", "Frame"), ("note_onset", "Note with onset"),
                  ("note_offset", "Note with offset"), ("note_offset_velocity", "Note w. offset & vel"))


def format_table(rows: dict) -> str:
    """Plain-text table, one row per name, P/R/F1 (percent) for each family."""
    name_w = max([len("name")] + [len(n) for n in rows])
    head1 = " " * name_w + " | " + " | ".join(f"{title:^20}" for _, title in _HEADER_GROUPS)
    head2 = f"{'name':<{name_w}}" + " | " + " | ".join(f"{'P':>6}{'R':>7}{'F1':>7}" for _ in _HEADER_GROUPS)
    lines = [head1, head2, "-" * len(head2)]
    for name, flat in rows.items():
        cells = []
        for fam, _ in _HEADER_GROUPS:
            vals = [flat[f"{fam}_{s}"] for s in ("precision", "recall", "f1")]
            cells.append("".join(f"{'-':>6}" if v is None else f"{100 * v:6.1f}" for v in vals[:1])
                         + "".join(f"{'-':>7}" if v is None else f"{100 * v:7.1f}" for v in vals[1:]))
        lines.append(f"{name:<{name_w}} | " + " | ".join(cells))
    return "\n".join(lines) + "\n"
