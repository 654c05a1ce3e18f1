"""Dynamic temporal causal discovery.

Thin python facade over the compiled core. The core speaks numpy arrays for
data and JSON strings for structured artifacts; this layer accepts plain
dicts for configs and returns parsed dicts for reports, so round trips with
CLI-produced files stay trivial (every artifact is the same JSON either way).
"""

from __future__ import annotations

import json
from typing import Any

from ._core import (  # noqa: F401  (re-exported as-is)
    ContractError,
    is_dag,
    penalty,
    prune,
)
from . import _core

__all__ = [
    "ContractError",
    "penalty",
    "is_dag",
    "prune",
    "generate",
    "fit",
    "evaluate",
]


def _as_json(config: dict[str, Any] | str | None) -> str:
    if config is None:
        return "{}"
    if isinstance(config, str):
        return config
    return json.dumps(config)


def generate(config: dict[str, Any] | str) -> dict[str, Any]:
    """Run a synthetic generator.

    ``config`` follows the CLI's ``generator`` block (kind, d, tau, N, T,
    noise, seed, ...). Returns ``{"data": ndarray[N, T, d], "meta": dict,
    "truth": dict}`` where truth is the ground-truth trajectory.
    """
    out = _core.generate(_as_json(config))
    return {
        "data": out["data"],
        "meta": json.loads(out["meta"]),
        "truth": json.loads(out["truth"]),
    }


def fit(
    data,
    tau: int,
    model: dict[str, Any] | str | None = None,
    train: dict[str, Any] | str | None = None,
) -> dict[str, Any]:
    """Fit the rolling-window causal model to ``data`` with max lag ``tau``.

    ``data`` is an ``[N, T, d]`` array; ``model`` and ``train`` follow the
    CLI's ``model`` / ``train`` config blocks (missing fields keep library
    defaults, ``d``/``tau`` default from the data). Returns ``{"report",
    "model", "trajectory", "pruned"}`` as dicts plus ``"trace_csv"`` as the
    flat per-step optimizer trace.
    """
    out = _core.fit(data, tau, _as_json(model), _as_json(train))
    return {
        "report": json.loads(out["report"]),
        "model": json.loads(out["model"]),
        "trajectory": json.loads(out["trajectory"]),
        "pruned": json.loads(out["pruned"]),
        "trace_csv": out["trace_csv"],
    }


def evaluate(
    trajectory: dict[str, Any] | str,
    truth: dict[str, Any] | str,
    delta: float = 0.1,
    blocks: bool = False,
) -> dict[str, Any]:
    """Score an estimated trajectory against ground truth at threshold delta.

    Both arguments are trajectory dicts (or JSON strings) as produced by
    ``fit()["trajectory"]`` / ``generate()["truth"]``. Returns the eval
    result with per-step rows, aggregates, and AUROC; undefined entries
    (e.g. precision with no predicted edges) come back as ``None``.
    """
    return json.loads(
        _core.evaluate(_as_json(trajectory), _as_json(truth), delta, blocks)
    )
