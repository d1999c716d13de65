"""Event trace: canonical JSONL serialization, parsing and digests.

The trace is the single source of truth for metrics and replay. Records
are plain dicts; serialization is canonical (sorted keys, compact
separators) so identical runs produce byte-identical files and digests.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable

Record = dict

# Event kinds appearing in the trace.
EV_META = "meta"
EV_GEN = "gen"
EV_TX = "tx"
EV_DELIVER = "deliver"
EV_DROP = "drop"
EV_TRACE_SUPPRESSED = "trace_suppressed"
EV_REPORT = "report"
EV_REPUT = "reput"
EV_DECLARED = "declared"
EV_REDEEMED = "redeemed"
EV_RREQ_DROP = "rreq_drop"
EV_RREP_DROP = "rrep_drop"
EV_ROUTE = "route"
EV_RERR = "rerr"
EV_PROBE = "probe"
EV_PROBE_RESULT = "probe_result"
EV_WARNING_RX = "warning_rx"
EV_SCRIPT = "script"
EV_END = "end"

# Drop categories for packet conservation accounting.
CAT_ADVERSARY = "adversary"
CAT_CHANNEL = "channel"
CAT_POLICY = "policy"


def dumps_record(record: Record) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def to_jsonl(records: Iterable[Record]) -> str:
    return "".join(dumps_record(r) + "\n" for r in records)


def parse_jsonl(text: str) -> list[Record]:
    records = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            records.append(json.loads(line))
    return records


def digest(records: Iterable[Record]) -> str:
    """Hex digest of the canonical serialization."""
    return hashlib.sha256(to_jsonl(records).encode("utf-8")).hexdigest()
