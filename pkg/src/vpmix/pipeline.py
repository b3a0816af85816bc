"""Batch orchestration: config files, source catalogs, mix manifests, evaluation runs,
onset-overlap statistics and piece-level dataset splits."""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .audio import AudioClip, SourceSpan, excerpt, read_wav, resample, write_wav
from .evaluation import MatchConfig, evaluate, format_table, mean_report, pooled_report
from .features import KeyLabel, chromagram, detect_onsets, estimate_key
from .midi import HOP_S, NoteList, excerpt_notes, n_frames_for, notes_to_onset_grid, parse_midi, shift_notes, write_midi
from .mixer import (
    KEY_STRATEGIES, STRATEGIES, MixError, MixParams, MixRecipe, best_shift, count_overlap,
    mix_pair, replay_mix, sample_span, select_violin_excerpt,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


class ConfigError(ValueError):
    pass


class BatchFailure(RuntimeError):
    """More than half of the requested items failed."""


# -- config --


@dataclass
class PipelineConfig:
    strategy: str = "random"
    count: int = 10
    seed: int = 0
    catalog: str | None = None
    out: str = "out"
    jobs: int = 1
    mix_rate: int | None = None  # None: the piano source's native rate
    rms_ratio: float | None = None
    rms_range: tuple = (0.3, 1.2)
    piano_excerpt_s: float = 20.0
    violin_extra_s: float = 5.5
    peak_cap: float = 0.99
    onset_tolerance_frames: int = 0
    key_retry_limit: int = 100
    hop_s: float = HOP_S
    onset_pre_max: int = 1
    onset_post_max: int = 1
    onset_pre_avg: int = 3
    onset_post_avg: int = 3
    onset_delta: float = 0.07
    onset_wait: int = 1
    onset_log_compression: float = 100.0
    onset_tol_s: float = 0.05
    offset_min_tol_s: float = 0.05
    offset_ratio: float = 0.2
    velocity_tol: float = 0.1
    velocity: bool = True
    pairs: int = 100
    strategies: tuple = ("random", "onset")
    split_ratios: tuple = (0.8, 0.1, 0.1)

    # keys that may change paths or speed but never outputs
    _UNHASHED = ("out", "jobs")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text(), base_dir=path.parent)

    @classmethod
    def from_text(cls, text: str, base_dir=None) -> "PipelineConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string("[config]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        return cls.from_mapping(dict(parser["config"]), base_dir)

    @classmethod
    def from_mapping(cls, raw: dict, base_dir=None) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        cfg = cls()
        for key, value in raw.items():
            if key not in known or key.startswith("_"):
                raise ConfigError(f"unknown config key {key!r}")
            try:
                setattr(cfg, key, _coerce(key, value, getattr(cls(), key)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
        if cfg.catalog and base_dir is not None and not os.path.isabs(cfg.catalog):
            cfg.catalog = os.path.normpath(os.path.join(base_dir, cfg.catalog))
        cfg.validate()
        return cfg

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        bad = [s for s in self.strategies if s not in ("random", "onset")]
        if bad:
            raise ConfigError(f"overlap-stats strategies must be 'random' or 'onset', got {bad}")
        if self.count < 0 or self.pairs < 0 or self.jobs < 1:
            raise ConfigError("count and pairs must be non-negative and jobs positive")
        try:
            self.mix_params()
            self.match_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def onset_params(self) -> dict:
        return {
            "pre_max": self.onset_pre_max, "post_max": self.onset_post_max,
            "pre_avg": self.onset_pre_avg, "post_avg": self.onset_post_avg,
            "delta": self.onset_delta, "wait": self.onset_wait,
            "log_compression": self.onset_log_compression,
        }

    def mix_params(self) -> MixParams:
        return MixParams(
            rms_ratio=self.rms_ratio, rms_range=tuple(self.rms_range),
            piano_excerpt_s=self.piano_excerpt_s, violin_extra_s=self.violin_extra_s,
            peak_cap=self.peak_cap, onset_tolerance_frames=self.onset_tolerance_frames,
            key_retry_limit=self.key_retry_limit, hop_s=self.hop_s, rng_seed=self.seed,
            onset_params=self.onset_params(),
        )

    def match_config(self) -> MatchConfig:
        return MatchConfig(self.onset_tol_s, self.offset_min_tol_s, self.offset_ratio,
                           self.velocity_tol, self.hop_s)

    def hash(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k not in self._UNHASHED}
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


def _coerce(key, value: str, default):
    value = value.strip()
    if key == "mix_rate":
        return None if value.lower() in ("", "native", "none") else int(value)
    if key == "rms_ratio":
        return None if value.lower() in ("", "none") else float(value)
    if key == "catalog":
        return value or None
    if isinstance(default, bool):
        low = value.lower()
        if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
            raise ValueError("expected a boolean")
        return low in ("true", "yes", "1", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        items = [v.strip() for v in value.split(",") if v.strip()]
        if default and isinstance(default[0], float):
            return tuple(float(v) for v in items)
        return tuple(items)
    return value


# -- catalog --


@dataclass
class CatalogEntry:
    source_id: str
    audio_path: str
    instrument: str
    midi_path: str | None = None
    piece_id: str | None = None
    composer: str | None = None
    key: KeyLabel | None = None
    duration_s: float = field(default=0.0, compare=False)


class SourceCatalog:
    """Sources listed in a CSV file with columns
    ``source_id, audio_path, instrument[, midi_path, piece_id, composer, key]``.

    Relative paths resolve against the CSV's directory.
    """

    COLUMNS = ("source_id", "audio_path", "instrument", "midi_path", "piece_id", "composer", "key")

    def __init__(self, entries, path=None):
        self.entries = list(entries)
        self.path = None if path is None else os.path.abspath(path)
        ids = [e.source_id for e in self.entries]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ConfigError(f"duplicate source_id(s) in catalog: {dupes}")
        self._by_id = {e.source_id: e for e in self.entries}
        self._audio_cache: dict = {}
        self._notes_cache: dict = {}
        for e in self.entries:
            if e.instrument not in ("piano", "violin"):
                raise ConfigError(f"{e.source_id}: instrument must be 'piano' or 'violin', got {e.instrument!r}")
            for p in (e.audio_path, e.midi_path):
                if p is not None and not os.path.exists(p):
                    raise ConfigError(f"{e.source_id}: referenced file does not exist: {p}")
            if not e.duration_s:
                e.duration_s = self.audio(e.source_id).duration_s

    @classmethod
    def load(cls, path) -> "SourceCatalog":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"catalog not found: {path}")
        base = path.parent
        entries = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"source_id", "audio_path", "instrument"} - set(reader.fieldnames or ())
            if missing:
                raise ConfigError(f"{path}: catalog lacks column(s) {sorted(missing)}")
            for row in reader:
                def opt(name):
                    v = (row.get(name) or "").strip()
                    return v or None

                def resolve(p):
                    return None if p is None else os.path.normpath(os.path.join(base, p))

                key = opt("key")
                entries.append(CatalogEntry(
                    source_id=row["source_id"].strip(),
                    audio_path=resolve(opt("audio_path")),
                    instrument=(opt("instrument") or "").lower(),
                    midi_path=resolve(opt("midi_path")),
                    piece_id=opt("piece_id"),
                    composer=opt("composer"),
                    key=None if key is None else KeyLabel.parse(key),
                ))
        return cls(entries, path)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, source_id) -> CatalogEntry:
        return self._by_id[source_id]

    def by_instrument(self, instrument: str) -> list:
        return [e for e in self.entries if e.instrument == instrument]

    def audio(self, source_id: str, rate: int | None = None) -> AudioClip:
        key = (source_id, rate)
        if key not in self._audio_cache:
            if (source_id, None) not in self._audio_cache:
                self._audio_cache[(source_id, None)] = read_wav(self._by_id[source_id].audio_path)
            clip = self._audio_cache[(source_id, None)]
            self._audio_cache[key] = clip if rate is None else resample(clip, rate)
        return self._audio_cache[key]

    def notes(self, source_id: str) -> NoteList | None:
        entry = self._by_id[source_id]
        if entry.midi_path is None:
            return None
        if source_id not in self._notes_cache:
            self._notes_cache[source_id] = parse_midi(entry.midi_path)
        return self._notes_cache[source_id]

    def excerpt(self, span: SourceSpan, rate: int | None = None) -> tuple[AudioClip, NoteList | None]:
        clip = excerpt(self.audio(span.source_id, rate), span)
        notes = self.notes(span.source_id)
        if notes is not None:
            notes = excerpt_notes(notes, span.start_s, span.duration_s)
        return clip, notes


def item_seed(global_seed: int, index: int) -> int:
    return int(global_seed) ^ int(index)


# -- mixing --


def _excerpt_key(catalog: SourceCatalog, span: SourceSpan, rate) -> KeyLabel:
    entry = catalog[span.source_id]
    if entry.key is not None:
        return entry.key
    clip, _ = catalog.excerpt(span, rate)
    return estimate_key(chromagram(clip))


def _pick_original_pair(catalog: SourceCatalog, params: MixParams, rng) -> tuple[SourceSpan, SourceSpan]:
    violins = {e.piece_id: e for e in catalog.by_instrument("violin") if e.piece_id}
    pianos = [e for e in catalog.by_instrument("piano") if e.piece_id in violins]
    if not pianos:
        raise MixError("original_pair needs piano and violin sources sharing a piece_id")
    piano = pianos[int(rng.integers(len(pianos)))]
    violin = violins[piano.piece_id]
    usable = min(piano.duration_s, violin.duration_s)
    if usable < params.piano_excerpt_s:
        raise MixError(f"piece {piano.piece_id} is shorter than {params.piano_excerpt_s} s")
    start = float(rng.uniform(0.0, usable - params.piano_excerpt_s))
    return (SourceSpan(piano.source_id, start, params.piano_excerpt_s),
            SourceSpan(violin.source_id, start, params.piano_excerpt_s))


def make_mix(catalog: SourceCatalog, cfg: PipelineConfig, index: int):
    """Draw and mix item ``index`` with its own seeded generator. Raises MixError/ValueError."""
    seed = item_seed(cfg.seed, index)
    rng = np.random.default_rng(seed)
    params = cfg.mix_params()
    strategy = cfg.strategy
    piano_key = violin_key = None
    fallback = False

    if strategy == "original_pair":
        piano_span, violin_span = _pick_original_pair(catalog, params, rng)
    else:
        piano_span = sample_span(catalog.by_instrument("piano"), params.piano_excerpt_s, rng)
    rate = cfg.mix_rate or catalog.audio(piano_span.source_id).sample_rate
    piano, piano_notes = catalog.excerpt(piano_span, rate)

    if strategy in KEY_STRATEGIES:
        piano_key = _excerpt_key(catalog, piano_span, rate)
        violin_span, violin_key, fallback = select_violin_excerpt(
            piano_key, catalog.by_instrument("violin"), params.violin_excerpt_s, rng,
            key_of=lambda span: _excerpt_key(catalog, span, rate), retry_limit=params.key_retry_limit)
        if fallback:
            log.warning("item %d: no key-compatible violin excerpt in %d draws, using last draw",
                        index, params.key_retry_limit)
    elif strategy != "original_pair":
        violin_span = sample_span(catalog.by_instrument("violin"), params.violin_excerpt_s, rng)
    violin, violin_notes = catalog.excerpt(violin_span, rate)

    return mix_pair(piano, piano_notes, violin, violin_notes, strategy, params, rng,
                      piano_span=piano_span, violin_span=violin_span, piano_key=piano_key,
                      violin_key=violin_key, key_fallback=fallback, seed=seed)


def _item_paths(index: int) -> tuple[str, str]:
    return f"audio/mix_{index:06d}.wav", f"labels/mix_{index:06d}.mid"


def _write_item(out_dir: Path, index: int, clip: AudioClip, notes: NoteList) -> tuple[str, str]:
    wav_rel, mid_rel = _item_paths(index)
    (out_dir / wav_rel).parent.mkdir(parents=True, exist_ok=True)
    (out_dir / mid_rel).parent.mkdir(parents=True, exist_ok=True)
    write_wav(clip, out_dir / wav_rel)
    write_midi(notes, out_dir / mid_rel)
    return wav_rel, mid_rel


_WORKER: dict = {}


def _init_worker(catalog_path, cfg_dict):
    _WORKER["catalog"] = SourceCatalog.load(catalog_path)
    _WORKER["cfg"] = PipelineConfig(**cfg_dict)


def _run_item(index: int):
    catalog, cfg = _WORKER["catalog"], _WORKER["cfg"]
    try:
        result = make_mix(catalog, cfg, index)
    except (MixError, ValueError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"
    wav_rel, mid_rel = _write_item(Path(cfg.out), index, result.clip, result.notes)
    record = {"index": index, "audio": wav_rel, "labels": mid_rel, "recipe": result.recipe.to_dict()}
    return index, record, None


def manifest_header(cfg: PipelineConfig, catalog_path: str) -> dict:
    return {
        "header": {
            "tool": "vpmix",
            "tool_version": __version__,
            "config_hash": cfg.hash(),
            "global_seed": cfg.seed,
            "strategy": cfg.strategy,
            "catalog": catalog_path,
        }
    }


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def cmd_mix(cfg: PipelineConfig) -> Path:
    """Generate ``cfg.count`` mixtures; returns the manifest path.

    Failed items are logged and skipped. Raises BatchFailure when more than
    half of them fail (after writing the manifest of the successes).
    """
    if not cfg.catalog:
        raise ConfigError("config has no 'catalog' entry")
    catalog = SourceCatalog.load(cfg.catalog)
    if not catalog.by_instrument("piano") or not catalog.by_instrument("violin"):
        raise ConfigError("catalog needs at least one piano and one violin source")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg_dict = asdict(cfg)
    if cfg.jobs > 1 and cfg.count > 1:
        with ProcessPoolExecutor(cfg.jobs, initializer=_init_worker, initargs=(catalog.path, cfg_dict)) as pool:
            results = list(pool.map(_run_item, range(cfg.count), chunksize=max(1, cfg.count // (4 * cfg.jobs))))
    else:
        _WORKER["catalog"], _WORKER["cfg"] = catalog, cfg
        results = [_run_item(i) for i in range(cfg.count)]

    manifest = out / MANIFEST_NAME
    failures = 0
    with open(manifest, "w") as fh:
        fh.write(_dumps(manifest_header(cfg, catalog.path)) + "\n")
        for index, record, error in sorted(results, key=lambda r: r[0]):
            if error is not None:
                failures += 1
                log.warning("item %d skipped: %s", index, error)
                continue
            fh.write(_dumps(record) + "\n")
    log.info("wrote %d mixtures (%d failed) to %s", cfg.count - failures, failures, out)
    if cfg.count and failures * 2 > cfg.count:
        raise BatchFailure(f"{failures} of {cfg.count} items failed")
    return manifest


def read_manifest(path) -> tuple[dict, list]:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or "header" not in lines[0]:
        raise ConfigError(f"{path}: manifest has no header line")
    return lines[0]["header"], lines[1:]


def replay_record(catalog: SourceCatalog, recipe: MixRecipe) -> tuple[AudioClip, NoteList | None]:
    piano, piano_notes = catalog.excerpt(recipe.piano_span, recipe.sample_rate)
    violin, _ = catalog.excerpt(recipe.violin_span, recipe.sample_rate)
    clip = replay_mix(recipe, piano, violin)
    notes = None if piano_notes is None else shift_notes(piano_notes, recipe.label_shift_s)
    return clip, notes


def cmd_replay(manifest_path, out_dir, catalog_path=None) -> int:
    """Rebuild every WAV (and label file) named in a manifest; returns the record count."""
    header, records = read_manifest(manifest_path)
    catalog = SourceCatalog.load(catalog_path or header["catalog"])
    out = Path(out_dir)
    for rec in records:
        recipe = MixRecipe.from_dict(rec["recipe"])
        clip, notes = replay_record(catalog, recipe)
        (out / rec["audio"]).parent.mkdir(parents=True, exist_ok=True)
        write_wav(clip, out / rec["audio"])
        if notes is not None:
            (out / rec["labels"]).parent.mkdir(parents=True, exist_ok=True)
            write_midi(notes, out / rec["labels"])
    return len(records)


# -- evaluation --


def _midi_files(directory) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"not a directory: {d}")
    return {p.stem: p for p in sorted(d.iterdir()) if p.suffix.lower() in (".mid", ".midi")}


def cmd_eval(ref_dir, est_dir, cfg: PipelineConfig, out_dir=None) -> dict:
    """Evaluate every estimate against the same-named reference.

    Returns (and optionally writes as ``eval.json``/``eval.txt``) per-piece,
    piece-averaged and note-pooled metrics.
    """
    refs, ests = _midi_files(ref_dir), _midi_files(est_dir)
    unpaired = sorted(set(refs) ^ set(ests))
    for name in unpaired:
        log.warning("unpaired file skipped: %s", name)
    match_cfg = cfg.match_config()
    reports = {}
    for name in sorted(set(refs) & set(ests)):
        reports[name] = evaluate(parse_midi(refs[name]), parse_midi(ests[name]), match_cfg, cfg.velocity)
    if not reports:
        raise ConfigError("no reference/estimate pairs found")
    result = {
        "pieces": {k: r.to_dict() for k, r in reports.items()},
        "mean": mean_report(list(reports.values())),
        "pooled": pooled_report(list(reports.values())),
        "unpaired": unpaired,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        rows = dict(result["pieces"])
        rows["MEAN"] = result["mean"]
        rows["POOLED"] = result["pooled"]
        (out / "eval.txt").write_text(format_table(rows))
    return result


# -- overlap statistics --

OVERLAP_COLUMNS = ("pair_id", "strategy", "shift", "overlap", "piano_onset_count", "violin_onset_count")


def _grid_for(catalog: SourceCatalog, span: SourceSpan, hop_s: float, onset_params: dict):
    clip, notes = catalog.excerpt(span)
    if notes is not None:
        return notes_to_onset_grid(notes, hop_s, n_frames_for(span.duration_s, hop_s))
    return detect_onsets(clip, **onset_params)


def cmd_overlap_stats(catalog: SourceCatalog, cfg: PipelineConfig, out_path=None) -> list:
    """Onset-overlap counts for ``cfg.pairs`` random excerpt pairs.

    For each pair and each requested strategy one row is produced: strategy
    ``random`` measures shift 0, ``onset`` the best shift.
    """
    pianos, violins = catalog.by_instrument("piano"), catalog.by_instrument("violin")
    if not pianos or not violins:
        raise ConfigError("catalog needs piano and violin sources")
    params = cfg.mix_params()
    rows = []
    for pair_id in range(cfg.pairs):
        rng = np.random.default_rng(item_seed(cfg.seed, pair_id))
        p_span = sample_span(pianos, params.piano_excerpt_s, rng)
        v_span = sample_span(violins, params.violin_excerpt_s, rng)
        p_grid = _grid_for(catalog, p_span, params.hop_s, params.onset_params)
        v_grid = _grid_for(catalog, v_span, params.hop_s, params.onset_params)
        for strategy in cfg.strategies:
            if strategy == "onset":
                shift, overlap = best_shift(p_grid, v_grid, params.max_shift_frames, params.onset_tolerance_frames)
            else:
                shift, overlap = 0, count_overlap(p_grid, v_grid, 0, params.onset_tolerance_frames)
            rows.append({"pair_id": pair_id, "strategy": strategy, "shift": shift, "overlap": overlap,
                         "piano_onset_count": len(p_grid), "violin_onset_count": len(v_grid)})
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=OVERLAP_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    return rows


# -- splits --

SPLIT_NAMES = ("train", "validation", "test")


def _split_sizes(n: int, ratios) -> list:
    raw = [round(n * r, 9) for r in ratios]
    sizes = [math.floor(x) for x in raw]
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def cmd_split(catalog: SourceCatalog, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> dict:
    """Assign whole pieces to train/validation/test.

    Pieces are visited composer by composer in round-robin order (after a
    seeded shuffle) and each goes to the open split where its composer is
    furthest below a share proportional to the split size. That spreads every
    composer over the splits wherever the sizes allow.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-6):
        raise ConfigError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    composer_of: dict = {}
    for e in catalog.entries:
        if e.piece_id is None:
            continue
        if composer_of.get(e.piece_id) is None:
            composer_of[e.piece_id] = e.composer
    pieces = sorted(composer_of)
    if len(pieces) < sum(1 for r in ratios if r > 0):
        raise ConfigError(f"{len(pieces)} piece(s) cannot fill {sum(1 for r in ratios if r > 0)} splits")

    n = len(pieces)
    sizes = _split_sizes(n, ratios)
    remaining = list(sizes)
    rng = np.random.default_rng(seed)
    shuffled = [pieces[i] for i in rng.permutation(n)]
    # pieces without a composer each form their own group
    groups: dict = {}
    for p in shuffled:
        groups.setdefault(composer_of[p] if composer_of[p] is not None else ("", p), []).append(p)
    order = sorted(groups, key=lambda c: (-len(groups[c]), str(c)))

    visit = []
    for rank in range(max(len(g) for g in groups.values())):
        visit += [(c, groups[c][rank]) for c in order if rank < len(groups[c])]

    held = {c: [0, 0, 0] for c in groups}
    assignment = {}
    for composer, piece in visit:
        total = len(groups[composer])
        open_splits = [s for s in range(3) if remaining[s] > 0]
        s = min(open_splits, key=lambda s: (-(total * sizes[s] / n - held[composer][s]), -remaining[s], s))
        assignment[piece] = SPLIT_NAMES[s]
        remaining[s] -= 1
        held[composer][s] += 1
    return dict(sorted(assignment.items()))


# -- analysis --


def analyze_clip(clip: AudioClip, onset_params: dict | None = None) -> dict:
    grid = detect_onsets(clip, **(onset_params or {}))
    try:
        chroma = chromagram(clip)
        key = str(estimate_key(chroma))
    except ValueError:
        chroma, key = None, None
    return {
        "duration_s": clip.duration_s,
        "sample_rate": clip.sample_rate,
        "key": key,
        "chroma": None if chroma is None else [round(float(c), 6) for c in chroma],
        "onset_frames": grid.onset_frames.tolist(),
        "onset_times_s": [round(float(t), 6) for t in grid.times_s],
        "hop_s": grid.hop_s,
    }
