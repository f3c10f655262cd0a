"""Smoke test for the geocircle Python module.

Build and install the module first:

    pip install maturin
    maturin develop -m crates/py/Cargo.toml

then run ``python python/smoke_test.py`` from the repository root.
"""

import math
import pathlib
import tempfile

import geocircle

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def corrected_engine():
    d = FIXTURES / "corrected"
    return geocircle.Engine.from_csv(
        confirmed=d / "time_series_covid19_confirmed_global.csv",
        deaths=d / "time_series_covid19_deaths_global.csv",
        population=FIXTURES / "UID_ISO_FIPS_LookUp_Table.csv",
        boundaries=d / "boundaries.geojson",
    )


def main():
    assert geocircle.clean_series([1, 3, 2, 5, 8]) == ([1, 2, 2, 5, 8], 1)

    r1 = geocircle.radius(100.0, reference=100.0)
    r2 = geocircle.radius(25.0, reference=100.0)
    assert math.isclose(r2 / r1, 0.25 ** 0.57, rel_tol=1e-12)
    assert geocircle.radius(0.0) == 0.0

    x, y = geocircle.project(0.0, 0.0, 0)
    assert math.isclose(x, 128.0) and math.isclose(y, 128.0)

    engine = corrected_engine()
    assert engine.report["adjusted_cells"] == 1
    meta = engine.meta()
    assert meta["n_days"] == 5 and meta["version"] == engine.version

    names = [r["id"] for r in engine.regions()]
    assert names == ["albania", "brazil", "paraguay"], names

    frame = engine.frame(vars=["confirmed"], rates=[], zoom=4, level="country", cluster_px=0)
    assert {e["id"] for e in frame["entries"]} == set(names)
    assert all(g["stroke"] == "broken" for e in frame["entries"] for g in e["variables"])

    picked = engine.pick(-21.0, -54.5, vars="confirmed", cluster_px=0)
    assert picked["region"] == "brazil" and picked["contained"], picked
    nearest = engine.pick(-21.0, -54.5, vars="confirmed", cluster_px=0, boundaries=False)
    assert nearest["region"] == "paraguay", nearest

    assert engine.window_value("brazil", "confirmed", "2020-03-02", "2020-03-04") == 14.0
    assert engine.window_value("brazil", "confirmed", "2020-03-02", "2020-03-04", agg="daily_avg") == 14.0 / 3

    series = engine.series("brazil", baseline="paraguay", vars="confirmed", rates="none")
    assert len(series["rows"]) == 5

    hits = engine.threshold("confirmed", 8, mode="window", window=1)
    assert [h["region"] for h in hits] == ["brazil"], hits

    csv = engine.request("regions", format="csv")
    assert csv.startswith("id,display_name,level,lat,lon,population\n")

    try:
        engine.series("atlantis")
    except KeyError:
        pass
    else:
        raise AssertionError("unknown region should raise KeyError")

    with tempfile.TemporaryDirectory() as tmp:
        engine.save(tmp)
        loaded = geocircle.Engine.load(tmp)
        assert loaded.version == engine.version
        assert loaded.frame() == engine.frame()

    print("python smoke test passed")


if __name__ == "__main__":
    main()
