"""Per-run regularity and performance indicators in a two-column table."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..hybrid import RunLog

ROW_LABELS = (
    "Successful steps",
    "Terminal pre-impact speed",
    "Mean |eta_s|",
    "min sigma_min(A)",
    "min ||M_s||",
)
# reference values as published for the surrogate model (open loop, controlled)
REFERENCE = {
    "Successful steps": (29, 50),
    "Terminal pre-impact speed": (0.2565, 0.5964),
    "Mean |eta_s|": (0.6505, 0.0041),
    "min sigma_min(A)": (0.4417, 0.4417),
    "min ||M_s||": (1.0106, 1.0106),
}
CSV_COLUMNS = ("quantity", "open_loop", "controlled", "reference_open_loop", "reference_controlled")


def indicators(log: RunLog | None):
    """The five indicators of one run; zeros for an empty run.

    The terminal speed is the forward hip velocity just before the last
    successful touchdown.
    """
    ok = [s for s in (log.steps if log else []) if s.success]
    if not ok:
        return dict.fromkeys(ROW_LABELS, 0.0) | {"Successful steps": 0}
    return {
        "Successful steps": len(ok),
        "Terminal pre-impact speed": float(ok[-1].pre_impact_vx),
        "Mean |eta_s|": float(log.mean_abs_eta_s()),
        "min sigma_min(A)": float(min(s.min_sigma_min_A for s in ok)),
        "min ||M_s||": float(min(s.min_norm_Ms for s in ok)),
    }


@dataclass
class Summary:
    open_loop: dict
    controlled: dict

    def rows(self):
        for label in ROW_LABELS:
            ref = REFERENCE[label]
            yield label, self.open_loop[label], self.controlled[label], ref[0], ref[1]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([row[0]] + [_num(v) for v in row[1:]])
        return buf.getvalue()

    def to_text(self):
        header = ("Quantity", "Open loop", "Controlled", "Ref. open loop", "Ref. controlled")
        body = [(r[0],) + tuple(_show(v) for v in r[1:]) for r in self.rows()]
        widths = [max(len(str(x[i])) for x in [header] + body) for i in range(len(header))]
        lines = []
        for i, r in enumerate([header] + body):
            cells = [str(r[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(r[1:], widths[1:])]
            lines.append("  ".join(cells))
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _num(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _show(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.4g}"


def summarize(run_controlled: RunLog | None, run_open: RunLog | None) -> Summary:
    return Summary(open_loop=indicators(run_open), controlled=indicators(run_controlled))


def parse_summary_csv(text):
    """Read back a summary CSV as ``{label: (open_loop, controlled)}``."""
    out = {}
    for r in csv.DictReader(io.StringIO(text)):
        out[r["quantity"]] = (float(r["open_loop"]), float(r["controlled"]))
    return out
