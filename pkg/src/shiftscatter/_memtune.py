"""Heap retention tuning for slow-first-touch hosts.

On some virtualized hosts, the first write to every newly mapped page traps
to the hypervisor and costs tens of microseconds, so a workload that keeps
allocating and freeing multi-hundred-megabyte buffers (as batch DSP over
long IQ captures does) spends most of its wall clock faulting pages back in.
Keeping freed blocks inside the process heap pays that cost once. No-op
where glibc is unavailable.
"""

from __future__ import annotations

import ctypes

_M_TRIM_THRESHOLD = -1
_M_MMAP_MAX = -4

_done = False


def retain_heap() -> bool:
    """Route large allocations through the heap and never trim it."""
    global _done
    if _done:
        return True
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        ok = bool(libc.mallopt(_M_MMAP_MAX, 0))
        ok = bool(libc.mallopt(_M_TRIM_THRESHOLD, 2 ** 31 - 1)) and ok
        _done = ok
        return ok
    except OSError:
        return False
