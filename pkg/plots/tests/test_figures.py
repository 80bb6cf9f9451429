"""Library-level tests: spec validation, curve geometry, determinism."""

import numpy as np
import pytest

from conftest import constant_rows, write_summary
from regretplot import (
    DEFAULT_COLORS,
    DEFAULT_LABELS,
    FigureSpec,
    SummarySchemaError,
    load_summary,
    plot_summary,
    render_summary,
)
from regretplot.figures import _FALLBACK_CYCLE


def spec_for(csv, out, **kwargs):
    return FigureSpec(summary_path=csv, out_path=out, **kwargs)


class TestValidation:
    def test_missing_file_rejected_at_spec_construction(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="not found"):
            spec_for(tmp_path / "absent.csv", tmp_path / "o.svg")

    def test_missing_columns_named_in_diagnostic(self, tmp_path):
        csv = tmp_path / "bad.csv"
        csv.write_text("algorithm,round,mean,m,normalized\ncppe,1,0.5,3,0\n")
        with pytest.raises(SummarySchemaError, match=r"missing columns \['std'\]"):
            load_summary(csv)

    def test_diagnostic_lists_found_columns(self, tmp_path):
        csv = tmp_path / "bad.csv"
        csv.write_text("a,b\n1,2\n")
        with pytest.raises(SummarySchemaError, match=r"found \['a', 'b'\]"):
            load_summary(csv)

    def test_header_only_file_rejected(self, tmp_path):
        csv = tmp_path / "empty.csv"
        csv.write_text("algorithm,round,mean,std,m,normalized\n")
        with pytest.raises(SummarySchemaError, match="no data rows"):
            load_summary(csv)

    def test_undecodable_file_rejected(self, tmp_path):
        csv = tmp_path / "junk.csv"
        csv.write_bytes(b"\xff\xfe\x00\x01binary")
        with pytest.raises(SummarySchemaError, match="cannot parse"):
            load_summary(csv)

    def test_load_returns_frame_unmodified(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("cppe", 2.0, 0.5, 4))
        frame = load_summary(csv)
        assert list(frame.columns) == [
            "algorithm", "round", "mean", "std", "m", "normalized",
        ]
        assert len(frame) == 10


class TestCurves:
    def test_constant_mean_zero_std_is_flat_line_without_band(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("solo", 5.0, 0.0, 3))
        fig, ax = render_summary(spec_for(csv, tmp_path / "o.svg"))
        lines = ax.get_lines()
        assert len(lines) == 1
        assert np.array_equal(lines[0].get_ydata(), np.full(10, 5.0))
        assert lines[0].get_label() == "solo"
        assert len(ax.collections) == 0

    def test_positive_std_draws_band(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("solo", 5.0, 1.0, 3))
        _, ax = render_summary(spec_for(csv, tmp_path / "o.svg"))
        assert len(ax.collections) == 1

    def test_one_curve_and_band_per_algorithm_with_default_styling(self, tmp_path):
        rows = []
        for name, mean in (("cppe", 1.0), ("fedpe", 3.0), ("indpe", 2.0)):
            rows += constant_rows(name, mean, 0.2, 5)
        csv = write_summary(tmp_path / "s.csv", rows)
        _, ax = render_summary(spec_for(csv, tmp_path / "o.svg"))
        lines = {ln.get_label(): ln for ln in ax.get_lines()}
        assert set(lines) == set(DEFAULT_LABELS.values())
        assert len(ax.collections) == 3
        for name, label in DEFAULT_LABELS.items():
            assert lines[label].get_color() == DEFAULT_COLORS[name]

    def test_label_and_color_maps_override_defaults(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("cppe", 1.0, 0.0, 5))
        _, ax = render_summary(
            spec_for(
                csv,
                tmp_path / "o.svg",
                labels={"cppe": "ours"},
                colors={"cppe": "#000000"},
            )
        )
        (line,) = ax.get_lines()
        assert line.get_label() == "ours"
        assert line.get_color() == "#000000"

    def test_unknown_algorithms_take_fallback_colors_in_order(self, tmp_path):
        rows = constant_rows("first", 1.0, 0.0, 2) + constant_rows("second", 2.0, 0.0, 2)
        csv = write_summary(tmp_path / "s.csv", rows)
        _, ax = render_summary(spec_for(csv, tmp_path / "o.svg"))
        colors = [ln.get_color() for ln in ax.get_lines()]
        assert colors == [_FALLBACK_CYCLE[0], _FALLBACK_CYCLE[1]]

    def test_rows_sorted_by_round_before_plotting(self, tmp_path):
        rows = [("solo", r, float(r), 0.0, 2, 0) for r in (30, 10, 20)]
        csv = write_summary(tmp_path / "s.csv", rows)
        _, ax = render_summary(spec_for(csv, tmp_path / "o.svg"))
        (line,) = ax.get_lines()
        assert np.array_equal(line.get_xdata(), [10.0, 20.0, 30.0])
        assert np.array_equal(line.get_ydata(), [10.0, 20.0, 30.0])

    def test_title_applied(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("solo", 1.0, 0.0, 2))
        _, ax = render_summary(spec_for(csv, tmp_path / "o.svg", title="headline"))
        assert ax.get_title() == "headline"


class TestNormalize:
    def test_normalize_divides_curve_by_m_exactly(self, tmp_path):
        rows = [("cppe", r, 7.0 * r, 1.5 * r, 100, 0) for r in range(1, 6)]
        csv = write_summary(tmp_path / "s.csv", rows)
        _, ax_raw = render_summary(spec_for(csv, tmp_path / "a.svg"))
        _, ax_norm = render_summary(spec_for(csv, tmp_path / "b.svg", normalize=True))
        raw = ax_raw.get_lines()[0].get_ydata()
        norm = ax_norm.get_lines()[0].get_ydata()
        assert np.array_equal(norm, raw / 100.0)
        assert ax_raw.get_ylabel() == "cumulative joint regret"
        assert ax_norm.get_ylabel() == "cumulative regret per agent"

    def test_rows_already_normalized_are_left_untouched(self, tmp_path):
        rows = [("cppe", r, 0.5 * r, 0.1, 100, 1) for r in range(1, 6)]
        csv = write_summary(tmp_path / "s.csv", rows)
        _, ax = render_summary(spec_for(csv, tmp_path / "o.svg", normalize=True))
        assert np.array_equal(
            ax.get_lines()[0].get_ydata(), [0.5 * r for r in range(1, 6)]
        )

    def test_pre_normalized_csv_labels_axis_per_agent_without_flag(self, tmp_path):
        rows = [("cppe", r, 0.5 * r, 0.1, 100, 1) for r in range(1, 6)]
        csv = write_summary(tmp_path / "s.csv", rows)
        _, ax = render_summary(spec_for(csv, tmp_path / "o.svg"))
        assert ax.get_ylabel() == "cumulative regret per agent"


class TestOutput:
    @pytest.mark.parametrize("ext", ["svg", "png", "pdf"])
    def test_identical_inputs_yield_identical_bytes(self, tmp_path, ext):
        rows = []
        for name, mean in (("cppe", 1.0), ("fedpe", 3.0)):
            rows += constant_rows(name, mean, 0.4, 5)
        csv = write_summary(tmp_path / "s.csv", rows)
        a = plot_summary(spec_for(csv, tmp_path / f"a.{ext}", title="t"))
        b = plot_summary(spec_for(csv, tmp_path / f"b.{ext}", title="t"))
        assert a.read_bytes() == b.read_bytes()

    def test_rerender_to_same_path_is_idempotent(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("cppe", 1.0, 0.2, 5))
        out = tmp_path / "o.svg"
        plot_summary(spec_for(csv, out))
        first = out.read_bytes()
        plot_summary(spec_for(csv, out))
        assert out.read_bytes() == first

    def test_input_csv_is_not_mutated(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("cppe", 1.0, 0.2, 5))
        before = csv.read_bytes()
        plot_summary(spec_for(csv, tmp_path / "o.svg", normalize=True))
        assert csv.read_bytes() == before

    def test_extensionless_path_defaults_to_svg(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("cppe", 1.0, 0.0, 5))
        out = plot_summary(spec_for(csv, tmp_path / "figure"))
        assert out.read_bytes().lstrip().startswith(b"<?xml")

    def test_plot_summary_returns_out_path(self, tmp_path):
        csv = write_summary(tmp_path / "s.csv", constant_rows("cppe", 1.0, 0.0, 5))
        out = tmp_path / "o.png"
        assert plot_summary(spec_for(csv, out)) == out
        assert out.is_file()
