"""Bundled tables: spins, optical rows, reference constants, figure configs."""

import math

import pytest

from nvsim.datasets import (
    FIGURE_IDS,
    default_optical_model,
    figure_config,
    figure_source,
    optical_reference,
    optical_rows,
    reference_values,
    spin_labels,
    spin_params,
    spin_row,
    spin_table,
    working_field,
)
from nvsim.errors import ConfigError
from nvsim.optical import isc_rate_from_lifetimes

TWO_PI = 2.0 * math.pi


def test_spin_labels_and_rows():
    assert spin_labels() == ("C1", "C2", "C3", "C4", "C5", "C6", "C7")
    row = spin_row("C1")
    assert row["delta_omega"] == 376500.0
    assert row["t2_star"] == pytest.approx(9.9e-3)
    assert row["t2_star_err"] == pytest.approx(0.2e-3)
    assert spin_row("C2")["delta_omega"] == 62400.0
    assert spin_row("C7")["delta_omega"] == 12200.0


def test_spin_params_are_angular():
    spin = spin_params("C1")
    assert spin.delta_omega == pytest.approx(TWO_PI * 376500.0)
    assert spin.t2_star == pytest.approx(9.9e-3)
    assert spin.t2_hahn == pytest.approx(60e-3)
    table = spin_table()
    assert set(table) == set(spin_labels())
    assert table["C3"].delta_omega == pytest.approx(TWO_PI * 77000.0)


def test_unknown_spin_is_reported():
    with pytest.raises(ConfigError, match="C9"):
        spin_row("C9")


def test_working_field():
    low = working_field()
    assert low.omega_larmor == pytest.approx(TWO_PI * 443275.0)
    high = working_field(high=True)
    assert high.omega_larmor == pytest.approx(10.0 * low.omega_larmor)


def test_reference_values_sections():
    ref = reference_values()
    decay = ref["stream_decay"]
    assert decay["spin"] == "C1"
    assert decay["n_plain"] == 106.0
    assert decay["n_echo"] == 263.0
    assert decay["n_phase_matched_err"] == 28.0
    pulses = ref["pulse_error_study"]
    assert pulses["n_max_c2"] == 837.0
    assert pulses["n_max_c3"] == 640.0
    assert ref["attempt"]["tau"] == "52 ns"
    assert ref["high_field_projection"]["optimal_n"] == 15000.0


def test_optical_reference_and_rows():
    ref = optical_reference()
    assert ref["model"]["p_singlet"] == 0.41
    rows = optical_rows()
    assert len(rows) == 5
    for row in rows:
        assert row["lifetime"] > 1e-7  # parsed to seconds
        assert 0.3 < row["p_singlet"] < 0.5
    assert rows[0]["strain_shift"] == pytest.approx(0.9e9)


def test_default_optical_model_derives_crossing_rate():
    model = default_optical_model()
    assert model.t_ex == pytest.approx(12.3e-9)
    assert model.t_eprime == pytest.approx(7.4e-9)
    assert model.t_singlet == pytest.approx(368e-9)
    assert model.branching == pytest.approx((0.8, 0.1, 0.1))
    assert model.gamma_es == pytest.approx(isc_rate_from_lifetimes(12.3e-9, 7.4e-9))


def test_figure_sources_exist_and_load():
    assert FIGURE_IDS == ("fig1d", "fig2", "fig3a", "fig3b", "fig4a", "fig4b", "fig5b")
    for fig_id in FIGURE_IDS:
        text = figure_source(fig_id)
        assert 'schema = "nvsim-scenario/1"' in text
        scenario = figure_config(fig_id)
        assert scenario.label == fig_id
        assert scenario.runs()
    with pytest.raises(ConfigError, match="nope"):
        figure_config("nope")
