"""Job pipeline: parse job documents, run them, render and sample the
results.

The same functions back the ``qesdx`` command and the HTTP service.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from qesdx.config import settings
from qesdx.exceptions import (
    DegeneratePairError,
    DomainError,
    JobParseError,
    PoleError,
    QESError,
    TransformationFunctionError,
)
from qesdx.models.jobs import (
    Action,
    Diagnostics,
    Job,
    NumerovConfig,
    PolynomialPayload,
    PotentialPayload,
    Report,
    StatePayload,
)
from qesdx.services import darboux, oracle
from qesdx.services.qpoly import (
    PolyC,
    QuasiWave,
    RationalPotential,
    RationalT,
    group_roots,
)
from qesdx.services.sextic import (
    SexticModel,
    SpectralEntry,
    build_model,
    complex_solutions,
    qes_spectrum,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VERIFY = 2
EXIT_INVALID = 3

INTERTWINE_SAMPLES = 5


@dataclass
class Construction:
    """Everything a job built, before serialization.

    Attributes:
        model: The sextic model
        potentials: Potentials by label, in construction order
        states: (potential label, entry) pairs
        classification: Chain classification, if any
        poles: Positive-t poles of the intermediate potential
        first_ops: (operator, input label, output label) for first-order
            steps
        second_ops: (operator, input label, output label) for second-order
            operators
        notes: Findings to report
    """

    model: SexticModel
    potentials: Dict[str, RationalPotential] = field(default_factory=dict)
    states: List[Tuple[str, SpectralEntry]] = field(default_factory=list)
    classification: Optional[str] = None
    poles: List[float] = field(default_factory=list)
    first_ops: List[Tuple[darboux.FirstOrderOp, str, str]] = field(
        default_factory=list
    )
    second_ops: List[Tuple[darboux.SecondOrderOp, str, str]] = field(
        default_factory=list
    )
    notes: List[str] = field(default_factory=list)

    @property
    def final(self) -> str:
        return list(self.potentials)[-1]


def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def parse_job(text: str) -> Job:
    """Parse and validate a JSON job document.

    Raises:
        JobParseError: On malformed JSON, unknown fields, missing model or
            malformed chain selectors.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise JobParseError(f"malformed job document: {e.msg}", e.lineno)
    if not isinstance(data, dict):
        raise JobParseError("job document must be a single object", 1)
    try:
        return Job.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(part) for part in first["loc"]]
        line = None
        for part in reversed(loc):
            line = _line_of(text, part)
            if line is not None:
                break
        where = ".".join(loc) or "job"
        raise JobParseError(f"{where}: {first['msg']}", line)


def _selected_state(spectrum: List[SpectralEntry], selector: str):
    index = int(selector.split(":", 1)[1])
    if index >= len(spectrum):
        raise DomainError(
            f"{selector} is out of range: the sector has "
            f"{len(spectrum)} states"
        )
    return spectrum[index]


def build(job: Job) -> Construction:
    """Run the construction requested by the job's chain selectors."""
    m = build_model(job.model.a, job.model.s, job.model.M)
    tol = job.tolerance
    out = Construction(model=m)
    out.potentials["V0"] = m.V0
    spectrum = qes_spectrum(m)
    for E, missing in spectrum.diagnostics.get(
        "jordan_deficiency", {}
    ).items():
        out.notes.append(
            f"defective eigenvalue E={E:.6g}: {missing} missing eigenvector"
        )
    out.states.extend(("V0", entry) for entry in spectrum)
    chain = job.chain if job.action is not Action.SPECTRUM else []
    if not chain:
        if job.action in (Action.TRANSFORM, Action.CLASSIFY):
            raise DomainError(f"{job.action.value} jobs need a chain")
        return out
    if chain == ["ground-chain"]:
        result = darboux.reducible_chain(m, tol)
        out.potentials["V1"] = result.V1
        out.potentials["V2"] = result.V2
        out.states.extend(("V1", e) for e in result.states["phi"])
        out.states.extend(("V2", e) for e in result.states["chi"])
        out.first_ops.append((result.op0, "V0", "V1"))
        out.first_ops.append((result.op1, "V1", "V2"))
        out.second_ops.append((result.second, "V0", "V2"))
        report = darboux.classify_chain(
            m, spectrum[0], spectrum[1], tol=tol
        )
        out.classification = report.kind.value
        out.poles = oracle.pole_scan(result.V1)
        if result.composition_gap > 1e-8:
            out.notes.append(
                f"composition gap {result.composition_gap:.3e} between "
                "the two-step and Wronskian routes"
            )
        return out
    if chain == ["conj-pair"]:
        pairs = complex_solutions(m)
        if not pairs:
            raise DomainError(f"no complex-energy pair for {m}")
        low, high = pairs[0]
        out.states.extend(("V0", e) for e in (low, high))
        report = darboux.classify_chain(m, low, high, spectrum, tol)
        _record_chain(out, report)
        return out
    if len(chain) == 1 and chain[0].startswith("state:"):
        source = _selected_state(spectrum, chain[0])
        step = darboux.first_order_chain(m, source, spectrum, "phi", tol)
        out.potentials["V1"] = step.V1
        out.states.extend(("V1", e) for e in step.mapped)
        out.first_ops.append((step.op, "V0", "V1"))
        out.poles = step.poles
        if not step.real:
            out.notes.append("intermediate potential is complex-valued")
        return out
    if len(chain) == 2 and all(c.startswith("state:") for c in chain):
        psi_a = _selected_state(spectrum, chain[0])
        psi_b = _selected_state(spectrum, chain[1])
        if psi_a is psi_b:
            raise DomainError(f"{chain[0]} is selected twice")
        report = darboux.classify_chain(m, psi_a, psi_b, spectrum, tol)
        _record_chain(out, report)
        return out
    raise DomainError(f"unsupported chain {chain}")


def _record_chain(out: Construction, report: darboux.ChainReport) -> None:
    out.potentials["V1"] = report.V1
    out.potentials["V2"] = report.V2
    out.states.extend(("V2", e) for e in report.mapped)
    out.first_ops.append((report.first, "V0", "V1"))
    out.second_ops.append((report.op, "V0", "V2"))
    out.classification = report.kind.value
    out.poles = report.V1_poles_on_domain
    out.notes.extend(report.notes)


def _pairs(values) -> List[List[float]]:
    return [[float(np.real(v)), float(np.imag(v))] for v in values]


def _fmt(z: complex) -> str:
    z = complex(z)
    if abs(z.imag) <= settings.REALNESS_TOL * (1.0 + abs(z)):
        return f"{z.real:.10g}"
    return f"({z.real:.10g}{z.imag:+.10g}i)"


def _signed(coeff: complex, body: str) -> str:
    text = _fmt(coeff)
    if text.startswith("-"):
        return f" - {text[1:]}{body}"
    return f" + {text}{body}"


def _partial_fractions(
    proper: RationalT,
) -> List[Tuple[complex, complex, int]]:
    """(coefficient, root, power) terms of a proper rational function."""
    terms = []
    groups = group_roots(proper.den_roots)
    for r, mult in groups:
        others = [q for q in proper.den_roots if abs(q - r) > 1e-8]
        piece = RationalT(proper.num, others)
        for j in range(mult):
            value = piece(r) / math.factorial(j)
            if abs(value) > settings.ZERO_TOL * (1.0 + proper.num.max_abs):
                terms.append((value, r, mult - j))
            piece = piece.deriv()
    return terms


def _factor(root: complex) -> str:
    text = _fmt(root)
    if text.startswith("-"):
        return f"(x^2 + {text[1:]})"
    return f"(x^2 - {text})"


def format_potential(label: str, V: RationalPotential) -> str:
    """Display form: polynomial part in x, the 1/x^2 term and partial
    fractions in x^2."""
    quotient, c, proper = V.rat.decompose()
    text = ""
    for n in range(quotient.degree, -1, -1):
        coeff = complex(quotient.coeffs[n])
        if abs(coeff) <= settings.ZERO_TOL * (1.0 + quotient.max_abs):
            continue
        body = "" if n == 0 else (" x^2" if n == 1 else f" x^{2 * n}")
        text += _signed(coeff, body)
    if c != 0:
        text += _signed(c, "/x^2")
    for coeff, root, power in _partial_fractions(proper):
        den = _factor(root)
        den = den if power == 1 else f"{den}^{power}"
        text += _signed(coeff, f"/{den}")
    text = text.strip()
    if text.startswith("+ "):
        text = text[2:]
    elif text.startswith("- "):
        text = "-" + text[2:]
    return f"{label}(x) = {text or '0'}"


def _potential_payload(label: str, V: RationalPotential) -> PotentialPayload:
    return PotentialPayload(
        label=label,
        num=PolynomialPayload(coeffs=_pairs(V.rat.num.coeffs)),
        den=PolynomialPayload(coeffs=_pairs(V.rat.den.coeffs)),
        den_roots=_pairs(V.rat.den_roots),
        real=oracle.realness_check(V),
        poles=oracle.pole_scan(V),
        centrifugal=_pairs([V.centrifugal])[0],
        text=format_potential(label, V),
    )


def _state_payload(
    potential: str, entry: SpectralEntry, res: float, tol: float
) -> StatePayload:
    wave = entry.wave
    return StatePayload(
        label=entry.label,
        potential=potential,
        E_re=entry.energy.real,
        E_im=entry.energy.imag,
        a=wave.a,
        k=wave.k,
        sigma=wave.sigma,
        scale=_pairs([wave.scale])[0],
        num=PolynomialPayload(coeffs=_pairs(wave.num.coeffs)),
        den=PolynomialPayload(coeffs=_pairs(wave.den.coeffs)),
        den_roots=_pairs(wave.ratio.den_roots),
        physical=entry.physical,
        residual=res,
        passed=res < tol,
    )


def _verification_checks(out: Construction, tol: float) -> List[str]:
    failures = []
    rng = np.random.default_rng(0)
    for op, src, dst in out.first_ops:
        V_in, V_out = out.potentials[src], out.potentials[dst]
        report = oracle.factorization_check(op, V_in, V_out, tol)
        if not report.passed:
            failures.append(
                f"factorization {src}->{dst}: {report.max_norm_coeff:.3e}"
            )
    for op, src, dst in out.second_ops:
        V_in, V_out = out.potentials[src], out.potentials[dst]
        for _ in range(INTERTWINE_SAMPLES):
            f = darboux.random_test_wave(out.model.a, rng)
            report = oracle.intertwine_check(op, V_in, V_out, f, tol)
            if not report.passed:
                failures.append(
                    f"intertwining {src}->{dst}: "
                    f"{report.max_norm_coeff:.3e}"
                )
                break
    return failures


def _numerov_spectra(
    out: Construction, job: Job, diagnostics: Diagnostics
) -> None:
    window = job.numerov
    cfg = NumerovConfig.for_stiffness(out.model.a, window.e_lo, window.e_hi)
    for label, V in out.potentials.items():
        if not oracle.realness_check(V):
            continue
        try:
            diagnostics.numerov[label] = oracle.numerov_spectrum(V, cfg)
        except DomainError as e:
            diagnostics.notes.append(f"numerov skipped for {label}: {e}")


def run_job(job: Job) -> Report:
    """Run a job and collect a verified report.

    Every produced state is checked against its potential. The exit code
    is 3 for an invalid chain, 2 for a failed check and 0 otherwise.
    Input errors give a report with exit code 1; domain errors raised by
    the construction's own checks count as failed checks (exit code 2).
    """
    tol = job.tolerance or settings.RESIDUAL_TOL
    logger.info(f"running {job.action.value} job, chain={job.chain}")
    try:
        out = build(job)
    except (
        TransformationFunctionError,
        DegeneratePairError,
        PoleError,
    ) as e:
        logger.error(f"construction failed its checks: {e}")
        return Report(
            job=job, passed=False, exit_code=EXIT_VERIFY, error=str(e)
        )
    except (DomainError, JobParseError) as e:
        logger.error(f"job rejected: {e}")
        return Report(
            job=job, passed=False, exit_code=EXIT_INPUT, error=str(e)
        )
    except QESError as e:
        logger.error(f"job failed: {e}")
        return Report(
            job=job, passed=False, exit_code=EXIT_VERIFY, error=str(e)
        )

    states = []
    for potential, entry in out.states:
        V = out.potentials[potential]
        res = oracle.residual(V, entry.energy, entry.wave, tol)
        states.append(
            _state_payload(potential, entry, res.max_norm_coeff, tol)
        )
    diagnostics = Diagnostics(
        max_residual=max((s.residual for s in states), default=0.0),
        poles=out.poles,
        real=oracle.realness_check(out.potentials[out.final]),
        notes=list(out.notes),
    )
    failures = [s.label for s in states if not s.passed]
    if failures:
        logger.warning(f"states failing their residual check: {failures}")
    if job.action is Action.VERIFY:
        checks = _verification_checks(out, tol)
        diagnostics.notes.extend(checks)
        failures.extend(checks)
    if job.numerov is not None:
        _numerov_spectra(out, job, diagnostics)

    if out.classification == darboux.ChainKind.INVALID.value:
        exit_code = EXIT_INVALID
    elif failures:
        exit_code = EXIT_VERIFY
    else:
        exit_code = EXIT_OK
    return Report(
        job=job,
        passed=not failures,
        exit_code=exit_code,
        classification=out.classification,
        potentials=[
            _potential_payload(label, V)
            for label, V in out.potentials.items()
        ],
        states=states,
        diagnostics=diagnostics,
    )


def _intermediate_line(report: Report) -> Optional[str]:
    V1 = next((p for p in report.potentials if p.label == "V1"), None)
    if V1 is None:
        return None
    if not V1.real:
        return "intermediate potential: complex-valued"
    if V1.poles:
        where = ", ".join(f"{t:.10g}" for t in V1.poles)
        return f"intermediate potential: singular on x > 0 (t = {where})"
    return "intermediate potential: real and regular"


def render_report(report: Report) -> str:
    """Human-readable summary of a report."""
    job = report.job
    params = job.model
    lines = [
        f"job: {job.action.value} (a={params.a:g}, s={params.s:g}, "
        f"M={params.M})" + (f" chain={job.chain}" if job.chain else "")
    ]
    if report.error:
        lines.append(f"error: {report.error}")
    if report.potentials:
        lines.append("potentials:")
        lines.extend(f"  {p.text}" for p in report.potentials)
    if report.states:
        lines.append("states:")
        for s in report.states:
            energy = _fmt(complex(s.E_re, s.E_im))
            tag = "physical" if s.physical else "non-physical"
            lines.append(
                f"  {s.label:<6} of {s.potential}: E = {energy}, "
                f"sigma = {s.sigma:g}, residual = {s.residual:.2e}, {tag}"
            )
    if report.classification:
        lines.append(f"classification: {report.classification}")
    intermediate = _intermediate_line(report)
    if intermediate:
        lines.append(intermediate)
    for label, levels in report.diagnostics.numerov.items():
        values = ", ".join(f"{e:.8f}" for e in levels)
        lines.append(f"numerov {label}: [{values}]")
    failing = [s.label for s in report.states if not s.passed]
    if failing:
        lines.append(f"verification: residual check failed for {failing}")
    elif report.states:
        lines.append("verification: all residuals pass")
    for note in report.diagnostics.notes:
        lines.append(f"note: {note}")
    lines.append(f"exit code: {report.exit_code}")
    return "\n".join(lines) + "\n"


def _poly_from(payload: PolynomialPayload) -> PolyC:
    return PolyC([complex(re, im) for re, im in payload.coeffs])


def _roots_from(pairs: List[List[float]]) -> List[complex]:
    return [complex(re, im) for re, im in pairs]


def reverify_report(report: Report) -> Dict[str, float]:
    """Recompute every state residual from the report's coefficient
    lists."""
    potentials = {
        p.label: RationalPotential(
            RationalT(_poly_from(p.num), _roots_from(p.den_roots))
        )
        for p in report.potentials
    }
    results = {}
    for s in report.states:
        wave = QuasiWave(
            complex(*s.scale),
            s.a,
            s.k,
            s.sigma,
            RationalT(_poly_from(s.num), _roots_from(s.den_roots)),
        )
        tol = report.job.tolerance or settings.RESIDUAL_TOL
        res = oracle.residual(
            potentials[s.potential], complex(s.E_re, s.E_im), wave, tol
        )
        results[f"{s.potential}:{s.label}"] = res.max_norm_coeff
    return results


def _hole_mask(x: np.ndarray, poles: List[float]) -> np.ndarray:
    step = (x[-1] - x[0]) / max(len(x) - 1, 1)
    mask = np.zeros(x.shape, dtype=bool)
    for t in poles:
        mask |= np.abs(x - math.sqrt(t)) < 0.5 * step + 1e-12
    return mask


def sample_grid(job: Job, objects: Optional[Construction] = None) -> str:
    """CSV samples of every potential and the requested states.

    Columns: x, one column per potential, then ``<label>_re`` and
    ``<label>_im`` per state. Cells at poles are left empty.
    """
    out = objects if objects is not None else build(job)
    grid = job.grid
    x = np.linspace(grid.x_min, grid.x_max, grid.points)
    frame = pd.DataFrame({"x": x})
    for label, V in out.potentials.items():
        values = V.evaluate(x)
        column = values.real if oracle.realness_check(V) else values
        mask = _hole_mask(x, oracle.pole_scan(V)) | ~np.isfinite(values)
        if np.iscomplexobj(column):
            frame[f"{label}_re"] = np.where(mask, np.nan, column.real)
            frame[f"{label}_im"] = np.where(mask, np.nan, column.imag)
        else:
            frame[label] = np.where(mask, np.nan, column)
    wanted = set(job.waves)
    for potential, entry in out.states:
        if wanted and entry.label not in wanted:
            continue
        values = entry.wave.evaluate(x)
        mask = _hole_mask(x, oracle.pole_scan(entry.wave)) | ~np.isfinite(
            values
        )
        name = f"{entry.label}@{potential}"
        frame[f"{name}_re"] = np.where(mask, np.nan, values.real)
        frame[f"{name}_im"] = np.where(mask, np.nan, values.imag)
    return frame.to_csv(
        index=False, na_rep="", lineterminator="\n", float_format="%.17g"
    )


class JobService:
    """Runs jobs and serves the example job documents."""

    def __init__(self, jobs_dir: Optional[str] = None):
        """Initialize the service and load the example jobs."""
        self.jobs_dir = jobs_dir or os.path.join(
            os.path.dirname(__file__), "..", "..", "jobs"
        )
        self.examples: Dict[str, Job] = {}
        self._load_examples()

    def _load_examples(self) -> None:
        """Load example jobs from the JSON files of the jobs directory."""
        if not os.path.isdir(self.jobs_dir):
            logger.warning(f"jobs directory {self.jobs_dir} not found")
            return
        for job_file in sorted(os.listdir(self.jobs_dir)):
            if not job_file.endswith(".json"):
                continue
            name = os.path.splitext(job_file)[0]
            path = os.path.join(self.jobs_dir, job_file)
            try:
                with open(path, "r", encoding="utf-8") as f:
                    self.examples[name] = parse_job(f.read())
                logger.info(f"Loaded example job from {job_file}")
            except (OSError, JobParseError) as e:
                logger.error(f"Error loading job {job_file}: {str(e)}")

    def run(self, job: Job) -> Report:
        return run_job(job)

    def render(self, job: Job) -> str:
        return render_report(run_job(job))

    def sample(self, job: Job) -> str:
        return sample_grid(job)
