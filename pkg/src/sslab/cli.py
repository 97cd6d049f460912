"""Command-line runner: ``sslab <experiment> --config <path> [--jobs N] [key=value ...]``.

The configuration is the experiment preset, overlaid with the JSON file,
overlaid with ``key=value`` overrides (dotted keys reach nested fields, values
are parsed as JSON when possible). Environment variables are not read.
Results go to ``<outdir>/<experiment>/<timestamp>/`` together with
``metadata.json``. Passing that file back as ``--config`` reruns the
experiment with the same configuration.

Exit codes: 0 success, 1 failure (a ``failures.json`` manifest is written),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from sslab import __version__
from sslab.experiments import EXPERIMENTS, merge, write_json


def parse_override(text: str) -> tuple[list[str], object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"override must look like key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(cfg: dict, overrides: list[tuple[list[str], object]]) -> dict:
    for path, value in overrides:
        node = cfg
        for k in path[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise argparse.ArgumentTypeError(f"cannot override inside non-object key {'.'.join(path)}")
        node[path[-1]] = value
    return cfg


def load_config(path: Path | None, experiment: str) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("configuration must be a JSON object")
    # a metadata sidecar from an earlier run carries its configuration under "config"
    if "config" in data and "experiment" in data:
        if data["experiment"] != experiment:
            raise ValueError(f"sidecar belongs to experiment {data['experiment']!r}")
        return data["config"]
    return data


def version_string() -> str:
    try:
        rev = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def make_run_dir(outdir: Path, experiment: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    run_dir = outdir / experiment / stamp
    suffix = 1
    while run_dir.exists():
        run_dir = outdir / experiment / f"{stamp}-{suffix}"
        suffix += 1
    run_dir.mkdir(parents=True)
    return run_dir


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sslab", description="Run a numerical experiment and write its datasets.")
    parser.add_argument("experiment", choices=sorted(EXPERIMENTS), help="experiment to run")
    parser.add_argument("--config", type=Path, help="JSON configuration (or a metadata.json from an earlier run)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for scan points and trajectory batches")
    parser.add_argument("--outdir", type=Path, help="output root (default: config 'outdir' or ./runs)")
    parser.add_argument("overrides", nargs="*", type=parse_override, metavar="key=value")
    return parser


def run(experiment: str, cfg: dict, jobs: int = 1, outdir: Path | None = None) -> tuple[int, Path]:
    """Run one experiment; returns (exit code, run directory)."""
    exp = EXPERIMENTS[experiment]
    resolved = merge(exp.preset, cfg)
    root = Path(outdir or resolved.get("outdir", "runs"))
    run_dir = make_run_dir(root, experiment)
    meta = {"experiment": experiment, "config": resolved, "version": version_string(), "jobs": jobs}
    start = time.perf_counter()
    try:
        result = exp.run(resolved, run_dir, jobs)
    except Exception as exc:
        meta["wall_time_s"] = time.perf_counter() - start
        write_json(run_dir / "failures.json", [{"point": "experiment", "error": f"{type(exc).__name__}: {exc}"}])
        meta["status"] = "failed"
        write_json(run_dir / "metadata.json", meta)
        print(f"sslab: {experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1, run_dir
    meta.update(
        wall_time_s=time.perf_counter() - start,
        files=result.files,
        seeds=result.seeds,
        summary=result.summary,
        status="ok" if not result.failures else "partial",
    )
    code = 0
    if result.failures:
        write_json(run_dir / "failures.json", [f.as_dict() for f in result.failures])
        meta["files"] = result.files + ["failures.json"]
        print(f"sslab: {len(result.failures)} grid point(s) failed; see failures.json", file=sys.stderr)
        code = 1
    write_json(run_dir / "metadata.json", meta)
    return code, run_dir


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    # overrides may follow the options, as in the documented usage line
    args = parser.parse_intermixed_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        cfg = apply_overrides(load_config(args.config, args.experiment), args.overrides)
    except (OSError, ValueError, argparse.ArgumentTypeError) as exc:
        parser.error(str(exc))
    code, run_dir = run(args.experiment, cfg, args.jobs, args.outdir)
    print(run_dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
