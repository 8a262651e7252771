"""Distant-supervision salience labels and score-based filtering."""

from collections import defaultdict
from dataclasses import replace

from .errors import CEOError

MATCH_MODES = ("lemma", "surface")


def _key(event, match):
    return event.lemma.lower() if match == "lemma" else event.trigger


def align_salience_labels(body_events, summary_events, match="lemma"):
    """Mark a body event salient iff its lemma (or surface trigger) shows up
    among the summary events of the same document."""
    if match not in MATCH_MODES:
        raise CEOError("E_CONFIG", f"match must be one of {MATCH_MODES}, got {match!r}")
    if len(body_events) == 0 or len(summary_events) == 0:
        raise CEOError("E_EMPTY", "body and summary event sets must both be nonempty")
    in_summary = defaultdict(set)
    for ev in summary_events:
        in_summary[ev.doc_id].add(_key(ev, match))
    labeled = [
        replace(ev, salience_label=_key(ev, match) in in_summary.get(ev.doc_id, ()))
        for ev in body_events
    ]
    return body_events.with_records(labeled)


def filter_salient(events, scores, threshold):
    """Keep events whose score is at least ``threshold``; order preserved.

    Kept records carry their score in ``salience_score``.
    """
    if not 0.0 <= threshold <= 1.0:
        raise CEOError("E_CONFIG", f"threshold must lie in [0, 1], got {threshold!r}")
    missing = [ev.id for ev in events if ev.id not in scores]
    if missing:
        raise CEOError("E_MISSING_SCORE", f"no salience score for {missing[:5]}")
    kept = [replace(ev, salience_score=float(scores[ev.id])) for ev in events if scores[ev.id] >= threshold]
    return events.with_records(kept)


def read_scores(path):
    """``id<TAB>score`` per line, scores in [0, 1]."""
    scores = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0]:
                    raise CEOError("E_PARSE", f"{path}:{lineno}: expected 'id<TAB>score'")
                try:
                    value = float(parts[1])
                except ValueError:
                    raise CEOError("E_PARSE", f"{path}:{lineno}: bad score {parts[1]!r}") from None
                if not 0.0 <= value <= 1.0:
                    raise CEOError("E_SCHEMA", f"{path}:{lineno}: score {value} outside [0, 1]")
                if parts[0] in scores:
                    raise CEOError("E_DUPLICATE_ID", f"{path}:{lineno}: repeated id {parts[0]!r}")
                scores[parts[0]] = value
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    return scores


def write_scores(scores, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for k, v in scores.items():
                fh.write(f"{k}\t{float(v)!r}\n")
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
