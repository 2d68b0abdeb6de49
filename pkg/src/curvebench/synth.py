"""Deterministic synthetic pool fixtures.

Stands in for the unpublished production snapshot: mean-reverting virtual
price around 1.0 with weekly seasonality (so temporal encodings carry
signal), plus volume/APY/supply series with their own seasonality and 2-3
token balances. Byte-identical output for a fixed seed.
"""
from __future__ import annotations

import os
from datetime import datetime, timezone

import numpy as np

from .features import MIN_SERIES_ROWS
from .ingest import CADENCE_SECONDS

START_ISO = "2024-07-20T18:00:00+00:00"
WEEK_STEPS = 28  # one week at 6-hour cadence

HEADER = ("timestamp,pool_address,pool_name,source,virtual_price,volume_24h,"
          "apy,total_supply")


def pool_id(index: int) -> str:
    return f"0xpool{index:02d}"


def _series(rng: np.random.Generator, rows: int):
    phase = rng.uniform(0.0, 2.0 * np.pi)
    t = np.arange(rows)
    season = 0.03 * np.sin(2.0 * np.pi * t / WEEK_STEPS + phase)
    shocks = rng.normal(0.0, 0.002, rows)
    u = np.empty(rows)
    u[0] = 0.0
    for i in range(1, rows):
        u[i] = 0.97 * u[i - 1] + shocks[i]
    vp = rng.uniform(1.0, 1.05) + season + u

    hour_phase = rng.uniform(0.0, 2.0 * np.pi)
    vol = np.exp(rng.uniform(10.0, 14.0)
                 + 0.3 * np.sin(2.0 * np.pi * t / 4.0 + hour_phase)
                 + rng.normal(0.0, 0.2, rows))
    apy = 2.0 + 1.5 * np.sin(2.0 * np.pi * t / 112.0 + phase) + rng.normal(0.0, 0.2, rows)
    supply = np.exp(rng.uniform(14.0, 17.0) + np.cumsum(rng.normal(0.0, 0.001, rows)))

    n_tokens = int(rng.integers(2, 4))
    shares = rng.dirichlet(np.ones(n_tokens))
    balances = np.empty((rows, n_tokens))
    for j in range(n_tokens):
        wobble = 0.2 * np.sin(2.0 * np.pi * t / WEEK_STEPS + rng.uniform(0, 2 * np.pi))
        balances[:, j] = np.maximum(
            supply * shares[j] * (1.0 + wobble + rng.normal(0.0, 0.05, rows)), 0.0)
    return vp, vol, apy, supply, balances


def generate_synthetic(out_dir: str, pools: int = 28, rows: int = 1460,
                       seed: int = 0) -> list[str]:
    """Write one grid-complete CSV per pool; returns the file paths."""
    if rows < MIN_SERIES_ROWS:
        raise ValueError(f"rows must be >= {MIN_SERIES_ROWS}, got {rows}")
    os.makedirs(out_dir, exist_ok=True)
    start = int(datetime.fromisoformat(START_ISO).timestamp())
    paths = []
    for p in range(pools):
        rng = np.random.default_rng(np.random.SeedSequence([seed, p]))
        vp, vol, apy, supply, balances = _series(rng, rows)
        n_tokens = balances.shape[1]
        name = pool_id(p)
        path = os.path.join(out_dir, f"{name}.csv")
        header = HEADER + "".join(f",balance_{j}" for j in range(n_tokens))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for i in range(rows):
                ts = datetime.fromtimestamp(start + i * CADENCE_SECONDS,
                                            tz=timezone.utc).isoformat()
                row = [ts, name, f"synth-pool-{p:02d}", "synthetic",
                       repr(float(vp[i])), repr(float(vol[i])), repr(float(apy[i])), repr(float(supply[i]))]
                row += [repr(float(balances[i, j])) for j in range(n_tokens)]
                fh.write(",".join(row) + "\n")
        paths.append(path)
    return paths
