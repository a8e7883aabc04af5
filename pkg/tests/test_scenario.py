import copy

import numpy as np
import pytest

from greencell.profiles import single_cell_doc, three_sector_doc
from greencell.scenario import (
    AnnulusSector,
    BaseStation,
    NetworkAction,
    Polygon,
    PowerConstants,
    ScenarioError,
    ScenarioParseError,
    association_map,
    bs_power,
    load_scenario,
    scenario_from_dict,
)

PC = PowerConstants()


def test_bundled_single_cell_shape(single_cell):
    assert (single_cell.B, single_cell.M, single_cell.K, single_cell.N) == (1, 2, 1, 600)
    assert single_cell.T == 24


def test_bundled_three_sector_covers_all_patterns(three_sector):
    assert three_sector.B == 3
    assert sorted(three_sector.association_table) == sorted(three_sector.patterns())
    assert len(three_sector.association_table) == 7


def test_weights_sum_error_names_field():
    doc = single_cell_doc()
    doc["weights"] = {"omega": [[0.5 / 24]] * 24}
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert exc.value.field == "weights"


def test_negative_traffic_rejected():
    doc = single_cell_doc()
    doc["traffic"]["rho"][3][0][0] = -1.0
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert exc.value.field == "traffic"


def test_malformed_file_is_parse_error(tmp_path):
    p = tmp_path / "bad.scn"
    p.write_text("power = [1, 2\n")
    with pytest.raises(ScenarioParseError):
        load_scenario(p)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/x.scn")


def test_traffic_from_csv(tmp_path):
    doc = single_cell_doc(T=2)
    rho = np.array(doc["traffic"]["rho"])
    rows = ["slot,region,class,rho"] + [f"{t},{m},0,{rho[t, m, 0]}" for t in range(2) for m in range(2)]
    (tmp_path / "traffic.csv").write_text("\n".join(rows) + "\n")
    doc["traffic"] = {"csv": "traffic.csv"}
    scn = scenario_from_dict(doc, base_dir=tmp_path)
    np.testing.assert_allclose(scn.traffic, rho)


def test_scenario_is_immutable(single_cell):
    with pytest.raises(ValueError):
        single_cell.traffic[0, 0, 0] = 1.0


def test_power_constant_validation():
    with pytest.raises(ScenarioError):
        PowerConstants(p_s=800.0)
    with pytest.raises(ScenarioError):
        PowerConstants(p_t=0.0)


# bs_power -------------------------------------------------------------------


def test_bs_power_full_band():
    assert bs_power(PC, 1, 600) == pytest.approx(1350.6, abs=1e-9)


def test_bs_power_zero_subcarriers():
    assert bs_power(PC, 1, 0) == pytest.approx(712.2)


def test_bs_power_off_and_sleeping():
    assert bs_power(PC, 0, 0) == 0.0
    assert bs_power(PC, 1, 600, sleeping_now=True) == 50.0


def test_bs_power_monotone_and_span():
    vals = [bs_power(PC, 1, n) for n in range(0, 601, 20)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert bs_power(PC, 1, 600) - bs_power(PC, 1, 0) == pytest.approx(PC.delta_p * PC.p_t, abs=1e-12)


# geometry -------------------------------------------------------------------


def test_annulus_area_and_samples():
    g = AnnulusSector((0.0, 0.0), 100.0, 200.0, 0.0, 90.0)
    assert g.area == pytest.approx(np.pi * (200**2 - 100**2) / 4)
    pts = g.sample(500)
    r = np.hypot(pts[:, 0], pts[:, 1])
    assert ((r >= 100) & (r <= 200)).all()
    assert (pts >= -1e-9).all()
    # equal-area placement: mean of r^2 is the midpoint of r_in^2 and r_out^2
    assert np.mean(r**2) == pytest.approx((100**2 + 200**2) / 2, rel=0.01)


def test_polygon_samples_inside():
    g = Polygon(((0.0, 0.0), (2.0, 0.0), (0.0, 2.0)))
    assert g.area == pytest.approx(2.0)
    pts = g.sample(300)
    assert len(pts) == 300
    assert (pts.sum(axis=1) <= 2.0 + 1e-12).all()


def test_sector_antenna_pattern():
    bs = BaseStation("a", (0.0, 0.0), azimuth=60.0, beamwidth=70.0, front_to_back=20.0)
    pts = np.array([[np.cos(np.radians(a)), np.sin(np.radians(a))] for a in (60.0, 130.0, 240.0)])
    g = 10 * np.log10(bs.antenna_gain(pts))
    np.testing.assert_allclose(g, [0.0, -12.0, -20.0], atol=1e-9)
    assert BaseStation("o", (0.0, 0.0)).antenna_gain(pts).tolist() == [1.0, 1.0, 1.0]


# association ----------------------------------------------------------------


def test_three_sector_all_on_each_region_own_bs(three_sector):
    amap = association_map(three_sector, (1, 1, 1))
    assert amap == {m: m // 2 for m in range(6)}


def test_three_sector_single_bs_serves_everything(three_sector):
    assert set(association_map(three_sector, (1, 0, 0)).values()) == {0}


def test_association_all_off_raises(three_sector):
    with pytest.raises(ValueError, match="no serving BS"):
        association_map(three_sector, (0, 0, 0))


def test_association_total_and_active(three_sector):
    for s in three_sector.patterns():
        amap = association_map(three_sector, s)
        assert sorted(amap) == list(range(three_sector.M))
        assert all(s[b] for b in amap.values())


def test_fallback_strongest_power():
    doc = three_sector_doc()
    del doc["association"]["110"]
    scn = scenario_from_dict(doc)
    amap = association_map(scn, (1, 1, 0))
    # own sectors stay with their BS; each half of the sleeping sector goes to the neighbour it faces
    assert amap == {0: 0, 1: 0, 2: 1, 3: 1, 4: 1, 5: 0}


def test_bad_association_rejected():
    doc = three_sector_doc()
    doc["association"]["110"] = [[0, 0, 1, 2, 3, 4, 5]]
    doc["association"]["110"][0][0] = 2
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert exc.value.field == "association"


# actions --------------------------------------------------------------------


def test_action_invariants():
    NetworkAction((1, 0), (600, 0), (0.0, 1.0))
    with pytest.raises(ValueError):
        NetworkAction((0,), (10,), (1.0,))
    with pytest.raises(ValueError):
        NetworkAction((0,), (0,), (0.0,))
    with pytest.raises(ValueError):
        NetworkAction((1,), (600,), (1.5,))
    a = NetworkAction.build((0, 1), (600, 300), (0.0, 0.2))
    assert a.n == (0, 300) and a.phi == (1.0, 0.2)


def test_weights_exponent(single_cell):
    w2 = single_cell.with_weights_exponent(2).weights[:, 0]
    shape = single_cell.traffic_shape()
    np.testing.assert_allclose(w2, shape**2 / np.sum(shape**2))
