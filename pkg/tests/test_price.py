import numpy as np
import pandas as pd
import pytest

from skillcast.errors import SeriesGapError
from skillcast.panel import Panel
from skillcast.price import SkillPriceSeries, flat_spot_price, flatspot_pairs, hedonic_price
from skillcast.synth import DgpConfig, generate_panel


def _frame(rows):
    cols = ["worker_id", "year", "log_wage", "experience"]
    df = pd.DataFrame(rows, columns=cols)
    return Panel(df.assign(group="private", occupation="o", sector="s", province="p", birth_year=1960,
                           male=True, survey_weight=1.0))


def test_constant_wages_give_unit_price():
    rows = [(f"w{i}", 2000 + t, 1.0 + 0.1 * i, 25 + t) for i in range(5) for t in range(4)]
    p = flat_spot_price(_frame(rows), n_boot=20)
    np.testing.assert_allclose(p.price, 1.0)


def test_two_worker_median_step():
    rows = [("a", 2000, 0.0, 25), ("a", 2001, 0.1, 26), ("b", 2000, 0.0, 25), ("b", 2001, 0.3, 26)]
    p = flat_spot_price(_frame(rows), n_boot=0)
    assert p.log_price[1] == pytest.approx(0.2, abs=1e-12)
    p = flat_spot_price(_frame(rows), n_boot=0, statistic="mean")
    assert p.log_price[1] == pytest.approx(0.2, abs=1e-12)


def test_single_year_series():
    p = flat_spot_price(_frame([("a", 2000, 1.0, 25)]))
    np.testing.assert_array_equal(p.price, [1.0])


def test_window_excludes_pairs_and_gaps_raise():
    rows = [("a", 2000, 0.0, 10), ("a", 2001, 0.5, 11), ("b", 2000, 0.0, 25), ("b", 2001, 0.1, 26),
            ("b", 2003, 0.2, 28)]
    pairs = flatspot_pairs(_frame(rows))
    assert list(pairs.t) == [2000]
    with pytest.raises(SeriesGapError) as exc:
        flat_spot_price(_frame(rows), n_boot=0)
    assert set(exc.value.years) == {2001}
    gapped = flatspot_pairs(_frame(rows), allow_gaps=True)
    np.testing.assert_allclose(gapped.dlw[gapped.t > 2000], [0.05, 0.05])


def test_noise_free_flat_spot_is_exact():
    # with a flat experience profile every within-worker change is a pure price change
    cfg0 = DgpConfig(n_workers=3000, n_years=10, seed=1, noise_sd=0.0, delta0=0.0, delta1=0.0)
    panel0, _, truth0 = generate_panel(cfg0)
    p = flat_spot_price(panel0.subset((panel0.frame.group == "private").to_numpy()), n_boot=0)
    tl = truth0.log_price.to_numpy()
    np.testing.assert_allclose(p.log_price, tl - tl[0], atol=1e-8)


def test_hedonic_noise_free_exact():
    cfg = DgpConfig(n_workers=3000, n_years=8, seed=2, noise_sd=0.0, projection_sd=0.0, missing_rate=0.0,
                    f0_spec="linear")
    panel, cov, truth = generate_panel(cfg)
    private = panel.subset((panel.frame.group == "private").to_numpy())
    p = hedonic_price(private, cov)
    tl = truth.log_price.to_numpy()
    np.testing.assert_allclose(p.log_price, tl - tl[0], atol=1e-8)


def test_hedonic_tracks_flat_spot():
    panel, cov, truth = generate_panel(DgpConfig(seed=0))
    private = panel.subset((panel.frame.group == "private").to_numpy())
    h = hedonic_price(private, cov)
    f = flat_spot_price(private, n_boot=0)
    assert np.corrcoef(h.log_price, f.log_price)[0, 1] > 0.9
    assert np.corrcoef(h.log_price, truth.log_price)[0, 1] > 0.95


def test_price_csv_roundtrip(tmp_path, small_comparable):
    cs, _, _ = small_comparable
    p = flat_spot_price(cs, n_boot=20, seed=3)
    p.to_csv(tmp_path / "p.csv")
    q = SkillPriceSeries.read_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(q.log_price, p.log_price)
    np.testing.assert_array_equal(q.se, p.se)


def test_bootstrap_is_seeded(small_comparable):
    cs, _, _ = small_comparable
    a = flat_spot_price(cs, n_boot=30, seed=9)
    b = flat_spot_price(cs, n_boot=30, seed=9)
    np.testing.assert_array_equal(a.se, b.se)
    assert a.se[0] == 0 and np.all(a.se[1:] > 0)
