"""Frame-based predictive routing for small-world delay tolerant networks.

Submodules:

- ``trace``     contact trace ingestion and slotted contact histories
- ``predict``   beta-frame construction and next-contact delay bounds
- ``analysis``  window metrics, temporal reachability, frame selection
- ``routing``   t-frames, s-frames and deadline constrained forwarding
- ``protocol``  self-stabilizing guarded-command node process
- ``baselines`` PROPHET and MEED-DVR single-copy routing
- ``mobility``  community based synthetic trace generator
- ``sim``       discrete-event simulator and experiment sweeps
"""

from reaper.trace import (
    ContactRecord,
    ContactTrace,
    EmptyTraceError,
    HistoryMatrix,
    SlotGrid,
    TraceParseError,
    ingest_trace,
    slot_contact_rate,
    slot_history,
)
from reaper.predict import (
    BetaFrame,
    NoContactError,
    build_beta_frame,
    max_delay_to_next_contact,
    normalize_instant,
)

__version__ = "0.1.0"
