"""Grid evaluation with a worker pool, per-point failure capture and checkpoints.

Workers are stateless; the caller's process is the single writer. Results
are keyed by point index, so output order never depends on scheduling.
"""

from concurrent.futures import ProcessPoolExecutor
import itertools
import json
import logging
from pathlib import Path

import numpy as np

from .errors import FluxmechError

log = logging.getLogger(__name__)


class FailureBudgetExceeded(FluxmechError):
    """More grid points failed than the configured budget allows."""

    def __init__(self, message, n_failed, n_total):
        super().__init__(message)
        self.n_failed = n_failed
        self.n_total = n_total


def grid_points(axes):
    """Cartesian product of named axes, first axis slowest. Returns a list of dicts."""
    names = list(axes)
    return [dict(zip(names, values)) for values in itertools.product(*(axes[n] for n in names))]


def _call(job):
    func, index, point = job
    try:
        return index, func(point), None
    except (FluxmechError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def _to_jsonable(value):
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _load_checkpoint(path):
    done = {}
    if path is None or not Path(path).exists():
        return done
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                # a torn final line from an interrupted write
                continue
            done[rec["index"]] = (rec["result"], rec["error"])
    return done


def run_grid(func, points, workers=1, checkpoint=None, checkpoint_every=50, resume=False,
             max_failure_fraction=1.0):
    """Evaluate ``func(point)`` over ``points``.

    ``func`` must be a picklable top-level function returning a JSON-friendly
    value. Failures raised as numerical errors become holes: the result is
    ``None`` and the error string is kept. With ``checkpoint`` set, finished
    points are appended to that JSON-lines file every ``checkpoint_every``
    points; ``resume`` skips points already present there.

    Returns ``(results, errors)``, two lists aligned with ``points``. Raises
    :class:`FailureBudgetExceeded` when the fraction of holes exceeds
    ``max_failure_fraction``.
    """
    n = len(points)
    if n == 0:
        raise ValueError("empty grid")
    done = _load_checkpoint(checkpoint) if resume else {}
    if checkpoint is not None and not resume and Path(checkpoint).exists():
        Path(checkpoint).unlink()
    todo = [(func, i, points[i]) for i in range(n) if i not in done]
    log.info("grid of %d points, %d already done", n, n - len(todo))
    buffer = []

    def flush():
        if checkpoint is None or not buffer:
            return
        Path(checkpoint).parent.mkdir(parents=True, exist_ok=True)
        with Path(checkpoint).open("a") as fh:
            for i, res, err in buffer:
                fh.write(json.dumps({"index": i, "result": _to_jsonable(res), "error": err}) + "\n")
        buffer.clear()

    def record(item):
        i, res, err = item
        done[i] = (_to_jsonable(res), err)
        buffer.append((i, res, err))
        if len(buffer) >= checkpoint_every:
            flush()

    try:
        if workers <= 1 or len(todo) <= 1:
            for job in todo:
                record(_call(job))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunk = max(1, len(todo) // (4 * workers))
                for item in pool.map(_call, todo, chunksize=chunk):
                    record(item)
    finally:
        flush()

    results = [done[i][0] for i in range(n)]
    errors = [done[i][1] for i in range(n)]
    n_failed = sum(e is not None for e in errors)
    if n_failed > max_failure_fraction * n:
        raise FailureBudgetExceeded(f"{n_failed} of {n} points failed", n_failed, n)
    return results, errors
