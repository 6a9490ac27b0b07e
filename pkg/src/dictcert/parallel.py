"""Deterministic trial fan-out shared by the Monte Carlo drivers.

Workers only ever split an index range; results are reassembled in index
order before any reduction, so every caller is bit-reproducible for any
worker count.  The default worker count comes from the DICTCERT_JOBS
environment variable (1 when unset).
"""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import ValidationError


def resolve_jobs(jobs):
    if jobs is None:
        env = os.environ.get("DICTCERT_JOBS", "").strip()
        if not env:
            return 1
        try:
            jobs = int(env)
        except ValueError:
            raise ValidationError("parallel: DICTCERT_JOBS must be a positive "
                                  "integer, got %r" % env)
    if not isinstance(jobs, (int, np.integer)) or isinstance(jobs, bool) or jobs < 1:
        raise ValidationError("parallel: jobs must be a positive integer, "
                              "got %r" % (jobs,))
    return int(jobs)


def run_chunk(fn, lo, hi):
    return [fn(t) for t in range(lo, hi)]


def map_trials(fn, total, jobs):
    """Evaluate fn(0..total-1), splitting the index range across workers.

    ``fn`` must be picklable (a module-level function or a partial of
    one).  Results come back in index order whatever the worker count.
    """
    jobs = min(jobs, total)
    if jobs <= 1:
        return run_chunk(fn, 0, total)
    bounds = np.linspace(0, total, jobs + 1).astype(int)
    out = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_chunk, fn, int(lo), int(hi))
                   for lo, hi in zip(bounds[:-1], bounds[1:])]
        for fut in futures:
            out.extend(fut.result())
    return out
