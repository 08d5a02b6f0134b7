"""Command-line front end: ``qesdx --job <file>``.

Reads one job document (from a file or standard input), runs it, prints
the rendered report and writes the JSON report and CSV samples when asked.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from qesdx.config import settings
from qesdx.exceptions import JobParseError
from qesdx.models.jobs import Action
from qesdx.services.jobs import (
    EXIT_INPUT,
    parse_job,
    render_report,
    run_job,
    sample_grid,
)

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qesdx",
        description=(
            "Darboux transformations of the radial sextic oscillator."
        ),
    )
    ap.add_argument(
        "--job",
        type=str,
        default=None,
        help="Path of the job document (default: standard input).",
    )
    ap.add_argument(
        "--out", type=str, default=None, help="Write the JSON report here."
    )
    ap.add_argument(
        "--csv", type=str, default=None, help="Write grid samples here."
    )
    ap.add_argument(
        "--tolerance",
        type=float,
        default=None,
        help="Residual tolerance (default: the job's, else RESIDUAL_TOL).",
    )
    return ap


def _read_job_text(path: Optional[str]) -> str:
    if path is None or path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def main(argv: Optional[List[str]] = None) -> int:
    """Run one job; the return value is the process exit code."""
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )

    try:
        job = parse_job(_read_job_text(args.job))
    except OSError as e:
        logger.error(f"Error reading job {args.job}: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except JobParseError as e:
        logger.error(f"Error parsing job: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    if args.tolerance is not None:
        if args.tolerance <= 0:
            print("error: --tolerance must be positive", file=sys.stderr)
            return EXIT_INPUT
        job = job.model_copy(update={"tolerance": args.tolerance})

    report = run_job(job)
    out_path = args.out or job.outputs.report
    if out_path:
        Path(out_path).write_text(
            report.model_dump_json(indent=2) + "\n", encoding="utf-8"
        )
        logger.info(f"Report written to {out_path}")

    csv_path = args.csv or job.outputs.csv
    wants_csv = csv_path is not None or job.action is Action.SAMPLE
    if wants_csv and report.error is None:
        csv_text = sample_grid(job)
        if csv_path:
            with open(csv_path, "w", encoding="utf-8", newline="") as f:
                f.write(csv_text)
            logger.info(f"Samples written to {csv_path}")
        else:
            sys.stdout.write(csv_text)
            return report.exit_code

    sys.stdout.write(render_report(report))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
