"""Per-split evaluation and report rendering (JSON and aligned text)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from ..corpus import atomic_write_text
from .metrics import EvalReport, bleu_from_stats, bleu_stats


def split_eval(
    hyps: Mapping[tuple[str, int], str],
    refs: Mapping[tuple[str, int], str],
    splits: Mapping[str, Sequence[tuple[str, int]]],
    mode: str = "word",
    lowercase: bool = False,
) -> dict[str, EvalReport]:
    """One report per non-empty split plus ``all`` over every reference key.

    Keys are (doc_id, sentence_index). Empty splits are omitted rather than
    reported as zero.
    """
    missing = [k for k in refs if k not in hyps]
    if missing:
        raise ValueError(f"{len(missing)} references have no hypothesis, e.g. {missing[0]}")
    keys = sorted(refs)
    per_key = {k: bleu_stats([hyps[k]], [refs[k]], mode, lowercase) for k in keys}

    def combine(ks, name):
        m = [0] * 4
        t = [0] * 4
        hl = rl = 0
        for k in ks:
            km, kt, kh, kr = per_key[k]
            m = [a + b for a, b in zip(m, km)]
            t = [a + b for a, b in zip(t, kt)]
            hl += kh
            rl += kr
        return bleu_from_stats(m, t, hl, rl, split=name)

    out = {"all": combine(keys, "all")}
    for name, ks in splits.items():
        ks = [tuple(k) for k in ks]
        unknown = [k for k in ks if k not in per_key]
        if unknown:
            raise ValueError(f"split {name!r} refers to unknown sentence {unknown[0]}")
        if ks:
            out[name] = combine(ks, name)
    return out


def reports_to_json(reports: Mapping[str, EvalReport]) -> dict:
    return {name: r.to_json() for name, r in reports.items()}


def reports_from_json(obj: Mapping[str, dict]) -> dict[str, EvalReport]:
    return {name: EvalReport.from_json(r) for name, r in obj.items()}


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def format_table(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    """Aligned plain-text table; None renders as '-'."""
    cells = [list(columns)] + [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = []
    for j, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


REPORT_COLUMNS = ("split", "bleu", "brevity_penalty", "hyp_tokens", "ref_tokens", "token_delta", "apt",
                  "contrastive_accuracy")


def reports_table(reports: Mapping[str, EvalReport]) -> str:
    return format_table([r.to_json() for r in reports.values()], REPORT_COLUMNS)


def write_reports(reports: Mapping[str, EvalReport], json_path, text_path=None) -> None:
    atomic_write_text(json_path, json.dumps(reports_to_json(reports), indent=1, sort_keys=True) + "\n")
    if text_path is not None:
        atomic_write_text(text_path, reports_table(reports))


def read_reports(path) -> dict[str, EvalReport]:
    return reports_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
