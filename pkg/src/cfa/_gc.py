"""Pause the cyclic garbage collector around long runs.

Traces and stores are acyclic and grow for the whole run, so periodic
full collections only rescan them; pausing keeps long runs linear.
"""

import contextlib
import gc


@contextlib.contextmanager
def gc_paused():
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()
