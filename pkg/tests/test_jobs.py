import io
import json
import math
import sys
from pathlib import Path

import pandas as pd
import pytest

# Add parent directory to path to import from qesdx
sys.path.insert(0, str(Path(__file__).parent.parent))

from qesdx import cli
from qesdx.exceptions import (
    DegeneratePairError,
    JobParseError,
    PoleError,
    TransformationFunctionError,
)
from qesdx.models.jobs import Report
from qesdx.services import jobs, oracle
from qesdx.services.jobs import (
    EXIT_INPUT,
    EXIT_INVALID,
    EXIT_OK,
    EXIT_VERIFY,
    JobService,
    format_potential,
    parse_job,
    render_report,
    reverify_report,
    run_job,
    sample_grid,
)
from qesdx.services.sextic import build_model

SPECTRUM = '{"model":{"a":0.5,"s":2,"M":2},"action":"spectrum"}'


def _job(chain, action="transform", M=2, **extra):
    doc = {"model": {"a": 0.5, "s": 2, "M": M}, "action": action}
    if chain is not None:
        doc["chain"] = chain
    doc.update(extra)
    return parse_job(json.dumps(doc))


def test_parse_job_applies_defaults():
    job = parse_job(SPECTRUM)
    assert job.action.value == "spectrum"
    assert job.chain == []
    assert (job.grid.x_min, job.grid.x_max, job.grid.points) == (
        0.05,
        4.0,
        400,
    )
    assert job.tolerance is None


def test_parse_job_accepts_chain_selectors():
    assert _job(["state:1", "state:2"]).chain == ["state:1", "state:2"]
    assert _job(["conj-pair"], M=0).chain == ["conj-pair"]
    assert _job(["ground-chain"]).chain == ["ground-chain"]


def test_parse_job_round_trips_its_echo():
    job = _job(["state:1", "state:2"], numerov={"e_lo": -15, "e_hi": 25})
    assert parse_job(job.model_dump_json(indent=2)) == job


@pytest.mark.parametrize(
    "text, fragment",
    [
        ('{"model": {"a": 0.5, "s": 2, "M": 2},\n "action": "spectrum",\n'
         ' "colour": 1}', "line 3"),
        ('{"action": "spectrum"}', "model"),
        ('{"model": {"a": 0.5, "s": 2, "M": 2},\n "action": "transform",\n'
         ' "chain": ["state:x"]}', "line 3"),
        ('{"model": {"a": 0.5, "s": 2, "M": 2}, "action": }', "line 1"),
        ('{"model": {"a": -1, "s": 2, "M": 2}, "action": "spectrum"}',
         "model.a"),
    ],
)
def test_parse_job_errors_carry_location(text, fragment):
    with pytest.raises(JobParseError) as err:
        parse_job(text)
    assert fragment in str(err.value)


def test_spectrum_job_reports_sector_energies():
    report = run_job(parse_job(SPECTRUM))
    assert report.exit_code == EXIT_OK
    assert report.passed
    energies = [s.E_re for s in report.states]
    assert energies == pytest.approx([-12.0, 0.0, 12.0], abs=1e-10)
    assert [p.label for p in report.potentials] == ["V0"]
    assert report.diagnostics.max_residual < 1e-9


def test_reducible_job():
    report = run_job(_job(["state:0", "state:1"]))
    assert report.exit_code == EXIT_OK
    assert report.classification == "Reducible"
    assert [p.label for p in report.potentials] == ["V0", "V1", "V2"]
    mapped = [s for s in report.states if s.potential == "V2"]
    assert [s.E_re for s in mapped] == pytest.approx([12.0])
    assert report.diagnostics.poles == []
    text = render_report(report)
    assert "classification: Reducible" in text
    assert "all residuals pass" in text
    assert "intermediate potential: real and regular" in text


def test_type_one_job():
    report = run_job(_job(["state:1", "state:2"]))
    assert report.exit_code == EXIT_OK
    assert report.classification == "IrreducibleType1"
    assert report.diagnostics.poles == pytest.approx([2.0, 4.0], abs=1e-8)
    V1 = next(p for p in report.potentials if p.label == "V1")
    assert V1.poles == pytest.approx([2.0, 4.0], abs=1e-8)
    assert "singular on x > 0" in render_report(report)


def test_type_two_job():
    report = run_job(_job(["conj-pair"], M=0))
    assert report.exit_code == EXIT_OK
    assert report.classification == "IrreducibleType2"
    V2 = next(p for p in report.potentials if p.label == "V2")
    assert V2.real and V2.poles == []
    labels = [s.label for s in report.states]
    assert labels == ["psi0", "cpx0-", "cpx0+", "chi0"]
    assert "intermediate potential: complex-valued" in render_report(report)


def test_singular_final_potential_is_invalid():
    report = run_job(_job(["state:0", "state:2"]))
    assert report.classification == "Invalid"
    assert report.exit_code == EXIT_INVALID
    assert "classification: Invalid" in render_report(report)


def test_input_errors_exit_with_code_one():
    report = run_job(_job(["state:7"]))
    assert report.exit_code == EXIT_INPUT
    assert "out of range" in report.error
    report = run_job(_job(None))
    assert report.exit_code == EXIT_INPUT
    report = run_job(_job(["ground-chain"], M=0))
    assert report.exit_code == EXIT_INPUT


def test_failing_residual_is_listed(monkeypatch):
    job = parse_job(SPECTRUM)
    built = jobs.build(job)
    monkeypatch.setattr(jobs, "build", lambda _: built)
    monkeypatch.setattr(
        jobs.oracle,
        "residual",
        lambda V, E, f, tol=None: oracle.ResidualReport(1.0, 1e-9),
    )
    report = run_job(job)
    assert report.exit_code == EXIT_VERIFY
    assert not report.passed
    text = render_report(report)
    assert "residual check failed for ['psi0', 'psi1', 'psi2']" in text


def test_verify_job_runs_operator_checks():
    report = run_job(_job(["ground-chain"], action="verify"))
    assert report.exit_code == EXIT_OK
    assert report.classification == "Reducible"
    assert [p.label for p in report.potentials] == ["V0", "V1", "V2"]
    assert report.diagnostics.notes == []


def test_numerov_window_adds_numerical_spectra():
    doc = {
        "model": {"a": 0.5, "s": 1, "M": 2},
        "action": "verify",
        "chain": ["state:0", "state:1"],
        "numerov": {"e_lo": -15, "e_hi": 25},
    }
    report = run_job(parse_job(json.dumps(doc)))
    levels = report.diagnostics.numerov
    root5 = math.sqrt(5)
    assert levels["V0"][:3] == pytest.approx([-4 * root5, 0, 4 * root5],
                                             abs=1e-4)
    assert levels["V2"][0] == pytest.approx(4 * root5, abs=1e-4)
    assert "V1" in levels


def test_report_is_reverifiable():
    report = run_job(_job(["conj-pair"], M=0))
    reloaded = Report.model_validate_json(report.model_dump_json())
    residuals = reverify_report(reloaded)
    for state in report.states:
        key = f"{state.potential}:{state.label}"
        assert abs(residuals[key] - state.residual) < 1e-12


def test_format_potential_display_form():
    text = format_potential("V0", build_model(0.5, 2, 2).V0)
    assert text == "V0(x) = 0.25 x^6 - 9 x^2 + 8.75/x^2"
    report = run_job(_job(["state:0", "state:1"]))
    V1 = next(p for p in report.potentials if p.label == "V1")
    assert V1.text.startswith("V1(x) = 0.25 x^6 - 6 x^2 + 15.75/x^2")
    assert "/(x^2 + 2)^2" in V1.text


def test_sample_grid_of_the_model():
    job = _job(None, action="sample", grid={
        "x_min": 0.5, "x_max": 1.0, "points": 3
    })
    text = sample_grid(job)
    assert "\r" not in text
    frame = pd.read_csv(io.StringIO(text))
    assert list(frame.columns[:2]) == ["x", "V0"]
    assert list(frame["x"]) == pytest.approx([0.5, 0.75, 1.0])
    assert frame["V0"][0] == pytest.approx(
        0.25 * 0.5**6 - 9 * 0.25 + 8.75 / 0.25
    )
    assert "psi0@V0_re" in frame.columns


def test_sample_grid_leaves_holes_at_poles():
    frame = pd.read_csv(
        io.StringIO(sample_grid(_job(["state:1", "state:2"])))
    )
    holes = frame.loc[frame["V1"].isna(), "x"].tolist()
    assert len(holes) == 2
    assert holes[0] == pytest.approx(math.sqrt(2), abs=0.01)
    assert holes[1] == pytest.approx(2.0, abs=0.01)
    assert not frame["V2"].isna().any()


def test_sample_grid_of_the_second_type_chain():
    frame = pd.read_csv(io.StringIO(sample_grid(_job(["conj-pair"], M=0))))
    assert "V2" in frame.columns
    assert not frame["V2"].isna().any()
    assert "V1_re" in frame.columns and "V1_im" in frame.columns


def test_job_service_loads_examples():
    service = JobService()
    assert {"spectrum", "reducible", "type1", "type2"} <= set(
        service.examples
    )
    report = service.run(service.examples["type1"])
    assert report.classification == "IrreducibleType1"


def test_job_service_skips_broken_files(tmp_path):
    (tmp_path / "good.json").write_text(SPECTRUM, encoding="utf-8")
    (tmp_path / "bad.json").write_text("{", encoding="utf-8")
    (tmp_path / "notes.txt").write_text("ignored", encoding="utf-8")
    service = JobService(str(tmp_path))
    assert list(service.examples) == ["good"]


def test_cli_writes_report_and_samples(tmp_path, capsys):
    job_file = tmp_path / "job.json"
    job_file.write_text(
        json.dumps(
            {
                "model": {"a": 0.5, "s": 2, "M": 2},
                "action": "transform",
                "chain": ["state:0", "state:1"],
            }
        ),
        encoding="utf-8",
    )
    out, csv = tmp_path / "report.json", tmp_path / "grid.csv"
    code = cli.main(
        ["--job", str(job_file), "--out", str(out), "--csv", str(csv)]
    )
    assert code == EXIT_OK
    assert "classification: Reducible" in capsys.readouterr().out
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["classification"] == "Reducible"
    assert csv.read_text(encoding="utf-8").startswith("x,V0,V1,V2,")


def test_cli_input_errors(tmp_path):
    assert cli.main(["--job", str(tmp_path / "missing.json")]) == EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"a": 0.5}}', encoding="utf-8")
    assert cli.main(["--job", str(bad)]) == EXIT_INPUT
    good = tmp_path / "good.json"
    good.write_text(SPECTRUM, encoding="utf-8")
    assert cli.main(["--job", str(good), "--tolerance", "-1"]) == EXIT_INPUT


def test_cli_reads_standard_input(monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO(SPECTRUM))
    assert cli.main([]) == EXIT_OK
    assert "psi0" in capsys.readouterr().out


@pytest.mark.parametrize(
    "error",
    [
        TransformationFunctionError("not a transformation function"),
        DegeneratePairError("proportional inputs"),
        PoleError("evaluated at a pole", 2.0),
    ],
)
def test_internal_check_failures_exit_with_code_two(monkeypatch, error):
    def failing_build(job):
        raise error

    monkeypatch.setattr(jobs, "build", failing_build)
    report = run_job(_job(["state:0", "state:1"]))
    assert report.exit_code == EXIT_VERIFY
    assert not report.passed
    assert report.error == str(error)


def test_repeated_state_selector_is_an_input_error():
    report = run_job(_job(["state:1", "state:1"]))
    assert report.exit_code == EXIT_INPUT
    assert "selected twice" in report.error


def test_ground_chain_classification_uses_job_tolerance(monkeypatch):
    seen = []
    classify = jobs.darboux.classify_chain

    def recording(*args, **kwargs):
        seen.append(kwargs.get("tol"))
        return classify(*args, **kwargs)

    monkeypatch.setattr(jobs.darboux, "classify_chain", recording)
    report = run_job(_job(["ground-chain"], tolerance=1e-7))
    assert report.exit_code == EXIT_OK
    assert seen == [1e-7]
