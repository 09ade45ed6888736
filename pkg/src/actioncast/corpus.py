"""The ingested-actions file: tokenized sessions ready for training.

One JSON object per line with fields ``t``, ``action`` (canonical label),
``app``, ``rel_x``, ``rel_y``, ``elapsed``; blank lines separate sessions.
Context is stored raw (app id rather than one-hot) so the same file can
be re-encoded against any vocabulary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .model import EncodedCorpus, encode_corpus
from .tokenizer import (
    ActionVocabulary,
    BUTTON_CLICK,
    ContextFeatures,
    TakenAction,
    UserAction,
    action_from_label,
    build_vocabulary,
    elapsed_bucket,
    relative_position,
)


@dataclass(frozen=True)
class ActionRow:
    t: int
    action: UserAction
    app: str
    rel_x: float
    rel_y: float
    elapsed: int


def rows_from_taken(taken: Sequence[TakenAction]) -> list[ActionRow]:
    """Flatten tokenized actions of one session into storable rows."""
    rows = []
    prev_t: int | None = None
    for ta in taken:
        rel_x, rel_y = relative_position(ta.event)
        rows.append(
            ActionRow(
                t=ta.timestamp_ms,
                action=ta.action,
                app=ta.event.app_id,
                rel_x=rel_x,
                rel_y=rel_y,
                elapsed=elapsed_bucket(prev_t, ta.timestamp_ms),
            )
        )
        prev_t = ta.timestamp_ms
    return rows


def write_actions(sessions: Sequence[Sequence[ActionRow]], path: str | Path) -> None:
    lines: list[str] = []
    for i, session in enumerate(sessions):
        if i:
            lines.append("")
        for row in session:
            lines.append(
                json.dumps(
                    {
                        "t": row.t,
                        "action": row.action.label,
                        "app": row.app,
                        "rel_x": round(row.rel_x, 6),
                        "rel_y": round(row.rel_y, 6),
                        "elapsed": row.elapsed,
                    },
                    sort_keys=True,
                )
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_actions(path: str | Path) -> list[list[ActionRow]]:
    sessions: list[list[ActionRow]] = []
    current: list[ActionRow] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            if current:
                sessions.append(current)
                current = []
            continue
        obj = json.loads(line)
        current.append(
            ActionRow(
                t=int(obj["t"]),
                action=action_from_label(obj["action"]),
                app=str(obj["app"]),
                rel_x=float(obj["rel_x"]),
                rel_y=float(obj["rel_y"]),
                elapsed=int(obj["elapsed"]),
            )
        )
    if current:
        sessions.append(current)
    return sessions


def vocabulary_from_rows(
    sessions: Sequence[Sequence[ActionRow]],
    patch_click_counts: dict[int, int] | None = None,
    min_click_count: int = ActionVocabulary.DEFAULT_MIN_CLICK_COUNT,
) -> ActionVocabulary:
    """Build action and app vocabularies from ingested sessions."""
    actions = [row.action for session in sessions for row in session]
    apps = sorted({row.app for session in sessions for row in session})
    return build_vocabulary(
        actions,
        patch_click_counts=patch_click_counts,
        min_click_count=min_click_count,
        app_vocab={app: i for i, app in enumerate(apps)},
    )


def row_context(row: ActionRow, vocab: ActionVocabulary) -> ContextFeatures:
    return ContextFeatures(
        app_index=vocab.app_index_of.get(row.app),
        n_apps=vocab.n_apps,
        rel_x=row.rel_x,
        rel_y=row.rel_y,
        elapsed_bucket=row.elapsed,
    )


def encode_rows(
    sessions: Sequence[Sequence[ActionRow]], vocab: ActionVocabulary
) -> EncodedCorpus:
    """Encode ingested sessions against a vocabulary for the model."""
    pairs = [
        [(row.action, row_context(row, vocab)) for row in session]
        for session in sessions
    ]
    return encode_corpus(pairs, vocab)


def button_click_counts(sessions: Sequence[Sequence[ActionRow]]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for session in sessions:
        for row in session:
            if row.action.kind == BUTTON_CLICK and row.action.patch_id is not None:
                counts[row.action.patch_id] = counts.get(row.action.patch_id, 0) + 1
    return counts
