"""
Unit tests for CSV, JSON and Markdown output of study reports.
"""

import json

import pytest

from src.errors import ValidationError
from src.orchestration.problem import parse_spec_text
from src.orchestration.state import ConvergenceReport, LevelRecord, RateModel, StudyPlan, merge_reports
from src.renderers.markdown import MarkdownRenderer
from src.renderers.reports import CSV_COLUMNS, read_csv_rows, report_to_csv, write_json, write_jsonl, write_report


SPEC = """
[domain]
polygon = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]

[sources]
points = [[0.5, 0.5]]

[control]
alpha = 0.1
lower = -1.0
upper = 1.0

[study]
levels = [2, 3, 4]
"""


def _report(study="state", quantity="state_l2", **extra):
    levels = [
        LevelRecord(level=k, h=2.0 ** -k, errors={quantity: 4.0 ** -k}) for k in (2, 3, 4)
    ]
    return ConvergenceReport(
        study=study,
        levels=levels,
        reference_level=6,
        reference_h=2.0 ** -6,
        quantities=[quantity],
        rates={quantity: RateModel(slope=2.0, intercept=0.0, r2=1.0, points=3)},
        log_powers={quantity: 0},
        monotone={quantity: True},
        **extra,
    )


class TestCsv:
    """Test the fixed-column CSV layout."""

    def test_header_and_blanks(self):
        lines = report_to_csv(_report()).splitlines()

        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 4
        cells = lines[1].split(",")
        assert cells[0] == "2"
        assert float(cells[2]) == 4.0 ** -2
        assert cells[3:] == ["", "", "", ""]

    def test_write_report(self, tmp_path):
        paths = write_report(_report(), tmp_path, stem="run")
        rows = read_csv_rows(paths["csv"])

        assert [row["level"] for row in rows] == ["2", "3", "4"]
        assert float(rows[2]["state_l2"]) == 4.0 ** -4
        data = json.loads(paths["json"].read_text())
        assert data["rates"]["state_l2"]["slope"] == 2.0

    def test_deterministic(self):
        assert report_to_csv(_report()) == report_to_csv(_report())


class TestJson:
    def test_write_json(self, tmp_path):
        path = write_json({"level": 3, "control": [0.5]}, tmp_path / "out" / "control.json")

        assert json.loads(path.read_text()) == {"level": 3, "control": [0.5]}

    def test_write_jsonl(self, tmp_path):
        path = write_jsonl([{"iter": 0}, {"iter": 1}], tmp_path / "trace.jsonl")

        assert [json.loads(line)["iter"] for line in path.read_text().splitlines()] == [0, 1]


class TestMergeReports:
    def test_merge(self):
        merged = merge_reports([_report(), _report(study="gradient", quantity="gradient_gap")])

        assert merged.study == "state+gradient"
        assert merged.quantities == ["state_l2", "gradient_gap"]
        assert set(merged.levels[0].errors) == {"state_l2", "gradient_gap"}
        assert set(merged.rates) == {"state_l2", "gradient_gap"}

    def test_merge_keeps_second_order_verdict(self):
        control = _report(study="control", quantity="control_err", sosc_verified=False)
        merged = merge_reports([_report(), control])

        assert merged.sosc_verified is False
        assert merge_reports([_report(), _report(study="gradient", quantity="gradient_gap")]).sosc_verified is None

    def test_merge_nothing(self):
        with pytest.raises(ValueError):
            merge_reports([])


class TestStudyPlan:
    """Test plan construction from a problem file."""

    def test_defaults_from_spec(self):
        plan = StudyPlan.from_spec(parse_spec_text(SPEC))

        assert plan.levels == [2, 3, 4]
        assert plan.reference_level == 6
        assert plan.threads == 1

    def test_overrides(self):
        plan = StudyPlan.from_spec(parse_spec_text(SPEC), levels=[3, 1], reference_level=7, quantities=["state_l1"])

        assert plan.levels == [1, 3]
        assert plan.quantities == ["state_l1"]

    def test_reference_too_close(self):
        with pytest.raises(ValidationError) as exc:
            StudyPlan.from_spec(parse_spec_text(SPEC), reference_level=5)

        assert any("reference" in v for v in exc.value.violations)

    def test_duplicate_levels(self):
        with pytest.raises(ValidationError):
            StudyPlan.from_spec(parse_spec_text(SPEC), levels=[2, 2])


class TestMarkdownRenderer:
    """Test Markdown rendering with and without the template."""

    def test_template(self, tmp_path):
        report = _report(sosc={"verdict": True, "critical_set": [0], "lambda_min": 0.3, "kappa_min": 0.05})
        content = MarkdownRenderer().render(report, tmp_path / "study.md")

        assert content.startswith("# Convergence study: state")
        assert "| 2 | 0.25 | 6.250e-02 |" in content
        assert "| state_l2 | 2.000 | 1.0000 |" in content
        assert "verdict: positive" in content
        assert (tmp_path / "study.md").read_text() == content

    def test_fallback_without_template(self, tmp_path):
        content = MarkdownRenderer(template_dir=tmp_path).render(_report())

        assert content.startswith("# Convergence study: state")
        assert "| 4 | 0.0625 | 3.906e-03 |" in content
        assert "| state_l2 | 2.000 | 1.0000 |  |" in content

    def test_unverified_rates_flagged(self):
        report = _report(study="control", quantity="control_err", sosc_verified=False)

        content = MarkdownRenderer().render(report)

        assert "**Unverified:**" in content
        assert "## Rates (unverified)" in content
        assert "verified at the reference" not in content

    def test_verified_rates(self):
        content = MarkdownRenderer().render(_report(study="control", quantity="control_err", sosc_verified=True))

        assert "Second-order condition verified at the reference." in content
        assert "Unverified" not in content

    def test_state_study_has_no_verdict(self):
        content = MarkdownRenderer().render(_report())

        assert "Unverified" not in content
        assert "Second-order condition verified" not in content

    def test_fallback_flags_unverified_rates(self, tmp_path):
        report = _report(study="control", quantity="control_err", sosc_verified=False)

        content = MarkdownRenderer(template_dir=tmp_path).render(report)

        assert "**Unverified:**" in content
        assert "Rates (unverified):" in content

    def test_json_carries_verdict(self, tmp_path):
        paths = write_report(_report(study="control", quantity="control_err", sosc_verified=False), tmp_path)

        assert json.loads(paths["json"].read_text())["sosc_verified"] is False
