import json
import math
import os
from pathlib import Path

import pytest

import indiff

CONFIGS = Path(os.environ.get("INDIFF_CONFIG_DIR", Path(__file__).resolve().parents[2] / "configs"))

# Quadrature value for the reference scenario.
REFERENCE_ORACLE = 1.0042793427345043


def test_oracle_on_reference():
    out = indiff.oracle(indiff.reference_scenario())
    assert out["method"] == "distortion"
    assert out["price"] == pytest.approx(REFERENCE_ORACLE, rel=1e-9)


def test_bsde_price_near_oracle():
    r = indiff.price(indiff.reference_scenario(), "bsde", paths=20000, steps=20, seed=7)
    assert math.isfinite(r["price"]) and r["price_stderr"] > 0
    assert r["price"] == pytest.approx(REFERENCE_ORACLE, rel=0.03)
    assert len(r["hedge_mean"]) == 20


def test_price_is_deterministic_in_seed():
    s = indiff.reference_scenario()
    a = indiff.price(s, "bsde", paths=5000, steps=10, seed=3)
    b = indiff.price(s, "bsde", paths=5000, steps=10, seed=3)
    assert a["price"] == b["price"] and a["hedge_mean"] == b["hedge_mean"]


def test_zero_claim_prices_zero():
    r = indiff.price(indiff.reference_scenario().with_lambda(0.0), "fde", paths=5000, steps=10)
    assert r["price"] == 0.0
    assert all(h == 0.0 for h in r["hedge_mean"])


def test_config_roundtrip_and_ledger():
    s = indiff.load_scenario(str(CONFIGS / "ref1.json"))
    assert s.d == 2
    ledger = indiff.constants(s)
    assert ledger["K1"] == 4.0
    assert indiff.summary(s)["name"] == s.name


def test_bad_input_raises():
    with pytest.raises(indiff.ConfigError):
        indiff.scenario_from_json("{")
    with pytest.raises(indiff.ConfigError):
        indiff.price(indiff.reference_scenario(), "nope", paths=5000, steps=10)
    bad = json.loads((CONFIGS / "ref1.json").read_text())
    bad["index"]["sigma"] = [0.0, 0.0]
    with pytest.raises(ValueError):
        indiff.price(indiff.scenario_from_json(json.dumps(bad)), paths=5000, steps=10)
