"""Trace files and evaluation reports.

Traces are line-delimited JSON, one record per verification cycle, carrying
enough per-position detail (token, p, q, u, r, judge score, decision) that
every report number can be recomputed by an independent reducer. The
canonical report files contain only deterministic fields; wall time is
display-only.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .decoding import VerificationTrace
from .labeling import generate_response
from .ngram import NGramModel


@dataclass
class PolicyReportRow:
    policy: str
    m: float  # mean emitted tokens per verification cycle
    mean_accepted_draft: float
    exact_match_rate: float  # vs the pure-target greedy rollout
    mean_token_logprob: float  # target log-likelihood per emitted token
    cycles: int
    wall_time_s: float = 0.0  # not part of the canonical report files


def trace_record(policy: str, prompt_id: int, cycle_idx: int, trace: VerificationTrace) -> dict:
    """Flatten one cycle trace into a JSON-friendly record."""
    positions = []
    for t, tok in enumerate(trace.draft_tokens):
        positions.append(
            {
                "token": int(tok),
                "p": float(trace.p[t][tok]),
                "q": float(trace.q[t]) if trace.q is not None else None,
                "u": float(trace.u[t]) if trace.u is not None else None,
                "r": float(trace.r[t]) if trace.r is not None else None,
                "judge_score": float(trace.judge_scores[t])
                if trace.judge_scores is not None
                else None,
                "decision": trace.decisions[t],
            }
        )
    return {
        "policy": policy,
        "prompt_id": prompt_id,
        "cycle": cycle_idx,
        "accepted_count": trace.accepted_count,
        "emitted": [int(t) for t in trace.emitted],
        "correction_source": trace.correction_source,
        "positions": positions,
    }


def write_traces(records: Sequence[dict], path: str | Path, meta: dict | None = None) -> None:
    with Path(path).open("w") as fh:
        if meta is not None:
            fh.write(json.dumps({"type": "meta", **meta}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_traces(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line:
            continue
        rec = json.loads(line)
        if rec.get("type") == "meta":
            continue
        records.append(rec)
    return records


def reduce_traces(
    records: Sequence[dict],
    target: NGramModel,
    prompts: Sequence[Sequence[int]],
    max_new_tokens: int,
) -> dict[str, PolicyReportRow]:
    """Recompute per-policy report rows from trace records alone.

    This is the independent reducer backing report-integrity checks: it
    reassembles each prompt's output from the per-cycle emissions (applying
    the same budget truncation as decode) and rederives every metric.
    """
    by_policy: dict[str, dict[int, list[dict]]] = {}
    for rec in records:
        by_policy.setdefault(rec["policy"], {}).setdefault(rec["prompt_id"], []).append(rec)

    rows: dict[str, PolicyReportRow] = {}
    for policy, per_prompt in sorted(by_policy.items()):
        accepted_total = 0
        emitted_total = 0
        cycles = 0
        matches = 0
        ll_sum = 0.0
        ll_tokens = 0
        for pid, recs in per_prompt.items():
            recs = sorted(recs, key=lambda r: r["cycle"])
            output: list[int] = []
            for rec in recs:
                cycles += 1
                accepted_total += rec["accepted_count"]
                emitted_total += len(rec["emitted"])
                room = max_new_tokens - len(output)
                output.extend(rec["emitted"][:room])
            prompt = list(prompts[pid])
            reference = generate_response(target, prompt, len(output))
            if output == reference:
                matches += 1
            ll_sum += target.sequence_logprob(output, prompt)
            ll_tokens += len(output)
        rows[policy] = PolicyReportRow(
            policy=policy,
            m=emitted_total / cycles,
            mean_accepted_draft=accepted_total / cycles,
            exact_match_rate=matches / len(per_prompt),
            mean_token_logprob=ll_sum / ll_tokens,
            cycles=cycles,
        )
    return rows


# ----------------------------------------------------------------------
# report files
# ----------------------------------------------------------------------

_COLUMNS = ("policy", "m", "mean_accepted_draft", "exact_match_rate", "mean_token_logprob", "cycles")


def render_table(rows: Sequence[PolicyReportRow], include_wall_time: bool = False) -> str:
    headers = list(_COLUMNS) + (["wall_time_s"] if include_wall_time else [])
    table = [headers]
    for row in rows:
        cells = [
            row.policy,
            f"{row.m:.4f}",
            f"{row.mean_accepted_draft:.4f}",
            f"{row.exact_match_rate:.4f}",
            f"{row.mean_token_logprob:.6f}",
            str(row.cycles),
        ]
        if include_wall_time:
            cells.append(f"{row.wall_time_s:.2f}")
        table.append(cells)
    widths = [max(len(r[c]) for r in table) for c in range(len(headers))]
    lines = []
    for i, cells in enumerate(table):
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_report(
    rows: Sequence[PolicyReportRow],
    jsonl_path: str | Path,
    table_path: str | Path,
    meta: dict | None = None,
) -> None:
    """Write the report as JSONL records plus a rendered plain-text table.

    Both files are deterministic; wall time is intentionally excluded.
    """
    with Path(jsonl_path).open("w") as fh:
        if meta is not None:
            fh.write(json.dumps({"type": "meta", **meta}, sort_keys=True) + "\n")
        for row in rows:
            rec = {
                "policy": row.policy,
                "m": row.m,
                "mean_accepted_draft": row.mean_accepted_draft,
                "exact_match_rate": row.exact_match_rate,
                "mean_token_logprob": row.mean_token_logprob,
                "cycles": row.cycles,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    Path(table_path).write_text(render_table(rows))


def read_report(path: str | Path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line:
            continue
        rec = json.loads(line)
        if rec.get("type") == "meta":
            continue
        rows.append(rec)
    return rows
