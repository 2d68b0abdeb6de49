"""Shared fixtures: small synthetic corpora and record builders."""
from __future__ import annotations

import numpy as np
import pytest

from curvebench.ingest import CADENCE_SECONDS, RawRecord
from curvebench.synth import generate_synthetic

T0 = 1_721_498_400  # an on-grid UTC epoch anchor


def make_record(i: int, pool: str = "0xabc", vp: float = 1.0,
                vol: float = 100.0, apy: float = 2.0, supply: float = 1e6,
                balances: tuple = (400.0, 600.0)) -> RawRecord:
    return RawRecord(
        timestamp=T0 + i * CADENCE_SECONDS,
        pool_address=pool,
        pool_name=f"pool-{pool}",
        source="test",
        virtual_price=vp,
        volume_24h=vol,
        apy=apy,
        total_supply=supply,
        balances=balances,
    )


def make_records(n: int, pool: str = "0xabc", rng: np.random.Generator | None = None):
    """n grid-complete records with mildly varying positive values."""
    rng = rng or np.random.default_rng(0)
    out = []
    for i in range(n):
        out.append(make_record(
            i, pool=pool,
            vp=1.0 + 0.01 * np.sin(i / 5.0) + 0.001 * rng.standard_normal(),
            vol=float(100.0 + 10.0 * rng.random()),
            apy=float(2.0 + rng.random()),
            supply=float(1e6 * (1.0 + 0.01 * rng.random())),
            balances=(float(400 + 10 * rng.random()), float(600 + 10 * rng.random())),
        ))
    return out


@pytest.fixture(scope="session")
def small_data_dir(tmp_path_factory):
    """Three small synthetic pools on disk (enough rows for features)."""
    d = tmp_path_factory.mktemp("synth_small")
    generate_synthetic(str(d), pools=3, rows=160, seed=7)
    return str(d)
