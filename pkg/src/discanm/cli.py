"""Command-line interface: ``discanm {infer,curve,simulate,oracle,fetch}``.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
malformed input, checksum mismatch, failed download).

Dataset cache: ``$DISCANM_CACHE_DIR`` (default ``~/.cache/discanm``) holds
the downloaded files plus ``manifest.json``, a map from dataset name to
``{"file", "url", "sha256", "rows"}``. The digest is recorded on the first
download and every later read is checked against it.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import urllib.error
import urllib.request
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from pathlib import Path

from . import __version__
from .domain import FunctionTable, NoisePmf, PairedSample, ValueDomain
from .inference import Outcome, infer_direction, pvalue_curve
from .regression import FULL_RANGE, TOP_K, AnmFit, RegressionConfig
from .simulate import SUITES, ExperimentSummary, SuiteSpec, run_suite
from .theory import (
    backward_search,
    divisibility_check,
    load_model,
    nonidentifiable_example,
    theorem1_decomposition,
)

CACHE_ENV = "DISCANM_CACHE_DIR"
URL_ENV = "DISCANM_ABALONE_URL"
ABALONE_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/abalone/abalone.data"
MANIFEST = "manifest.json"

# Abalone columns: sex, length, diameter, height, then weights and rings.
ABALONE_COLUMNS = {"length": 1, "diameter": 2, "height": 3}
ABALONE_SEX = {"I": 0, "M": 1, "F": 2}
ABALONE_SCALE = 100
ABALONE_ROWS = 1000


class DataError(Exception):
    """Bad input data; maps to exit code 2."""


class ChecksumError(DataError):
    pass


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- ingestion


def quantize(cell: str, scale: int | None) -> int:
    """Integer value of a cell; with ``scale`` the decimal is multiplied and
    rounded half-up (0.455 at scale 100 -> 46)."""
    if scale is None:
        return int(cell)
    q = (Decimal(cell) * scale).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return int(q)


def parse_csv(
    path,
    x_col=0,
    y_col=1,
    header: bool = False,
    delimiter: str = ",",
    x_domain: ValueDomain | None = None,
    y_domain: ValueDomain | None = None,
    limit: int | None = None,
    x_scale: int | None = None,
    y_scale: int | None = None,
    x_map: dict | None = None,
) -> PairedSample:
    """Read two columns as a sample, keeping file order.

    Columns are indices, or header names when ``header`` is set. ``x_map``
    recodes raw X labels (e.g. abalone sex letters) before parsing.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    rows = [r for r in csv.reader(text.splitlines(), delimiter=delimiter) if r]
    if header:
        if not rows:
            raise DataError(f"{path}: empty file")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        x_col, y_col = (_column_index(names, c) for c in (x_col, y_col))
    else:
        x_col, y_col = int(x_col), int(y_col)
    if not rows:
        raise DataError(f"{path}: empty file")
    if limit is not None:
        rows = rows[:limit]
    xs, ys = [], []
    first = 2 if header else 1
    for k, row in enumerate(rows, start=first):
        for col in (x_col, y_col):
            if col >= len(row):
                raise DataError(f"{path}: row {k} has no column {col}")
        try:
            raw = row[x_col].strip()
            xs.append(x_map[raw] if x_map is not None else quantize(raw, x_scale))
        except (KeyError, ValueError, InvalidOperation):
            raise DataError(f"{path}: row {k}, column {x_col}: cannot parse {row[x_col]!r}") from None
        try:
            ys.append(quantize(row[y_col].strip(), y_scale))
        except (ValueError, InvalidOperation):
            raise DataError(f"{path}: row {k}, column {y_col}: cannot parse {row[y_col]!r}") from None
    return PairedSample(xs, ys, x_domain or ValueDomain.integer(), y_domain or ValueDomain.integer())


def _column_index(names: list[str], col) -> int:
    if isinstance(col, int) or str(col).isdigit():
        return int(col)
    if col not in names:
        raise DataError(f"missing column {col!r}")
    return names.index(col)


# ------------------------------------------------------------------ dataset


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "discanm")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_manifest(cache: Path) -> dict:
    p = cache / MANIFEST
    if not p.exists():
        return {}
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"corrupt manifest {p}: {e}") from e


def fetch_dataset(name: str, cache_dir=None, url: str | None = None, timeout: float = 30.0) -> Path:
    """Path to a cached copy of ``name``, downloading it on first use."""
    if name != "abalone":
        raise UsageError(f"unknown dataset {name!r}; available: abalone")
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    target = cache / "abalone.data"
    manifest = _read_manifest(cache)
    entry = manifest.get(name)
    if target.exists() and entry is not None:
        if _sha256(target) != entry["sha256"]:
            raise ChecksumError(f"checksum mismatch for {target}; delete it to re-download")
        return target
    url = url or os.environ.get(URL_ENV) or ABALONE_URL
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            data = resp.read()
    except (urllib.error.URLError, OSError, ValueError) as e:
        raise DataError(f"download of {url} failed and no cached copy exists: {e}") from e
    cache.mkdir(parents=True, exist_ok=True)
    target.write_bytes(data)
    manifest[name] = {
        "file": target.name,
        "url": url,
        "sha256": hashlib.sha256(data).hexdigest(),
        "rows": sum(1 for line in data.decode().splitlines() if line.strip()),
    }
    (cache / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return target


def abalone_sample(path, column: str, x_domain: ValueDomain | None = None,
                   limit: int | None = ABALONE_ROWS) -> PairedSample:
    """Sex (I=0, M=1, F=2) against a size column in units of 1/100, first rows."""
    if column not in ABALONE_COLUMNS:
        raise UsageError(f"unknown abalone column {column!r}; use one of {sorted(ABALONE_COLUMNS)}")
    return parse_csv(path, 0, ABALONE_COLUMNS[column], x_domain=x_domain, limit=limit,
                     y_scale=ABALONE_SCALE, x_map=ABALONE_SEX)


# ------------------------------------------------------------------ reports


def _fit_block(fit: AnmFit) -> dict:
    return {
        "function": {str(k): v for k, v in fit.f.as_dict().items()},
        "noise": {str(k): float(v) for k, v in fit.noise_pmf.as_dict().items()},
        "p_value": fit.p_value,
        "statistic": fit.statistic,
        "method": fit.method,
        "dm_evaluations": fit.dm_evaluations,
        "sweeps_used": fit.sweeps_used,
        "accepted": fit.accepted,
    }


def config_echo(cfg: RegressionConfig) -> dict:
    from .inference import backward_seed

    d = dataclasses.asdict(cfg)
    d["backward_seed"] = backward_seed(cfg.seed)
    return d


@dataclass(frozen=True)
class InferenceReport:
    dataset: str
    x_domain: str
    y_domain: str
    n: int
    forward: dict
    backward: dict
    verdict: str
    config: dict
    version: str = __version__

    def __post_init__(self):
        alpha = self.config["alpha"]
        fwd = self.forward["p_value"] > alpha
        bwd = self.backward["p_value"] > alpha
        expected = {(True, False): Outcome.X_CAUSES_Y, (False, True): Outcome.Y_CAUSES_X,
                    (True, True): Outcome.BOTH_POSSIBLE, (False, False): Outcome.BAD_FIT}[fwd, bwd]
        if expected.value != self.verdict:
            raise ValueError("verdict inconsistent with p-values and alpha")

    @classmethod
    def build(cls, dataset: str, sample: PairedSample, cfg: RegressionConfig) -> InferenceReport:
        v = infer_direction(sample, cfg)
        return cls(dataset, str(sample.x_domain), str(sample.y_domain), len(sample),
                   _fit_block(v.forward), _fit_block(v.backward), v.outcome.value, config_echo(cfg))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> InferenceReport:
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def forward_function(self) -> FunctionTable:
        return FunctionTable({int(k): v for k, v in self.forward["function"].items()},
                             ValueDomain.parse(self.y_domain))

    def forward_noise(self) -> NoisePmf:
        return NoisePmf.from_mapping({int(k): v for k, v in self.forward["noise"].items()},
                                     ValueDomain.parse(self.y_domain))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def curve_csv(points) -> str:
    lines = ["n,p_forward,p_backward"]
    lines += [f"{p.n},{p.p_forward!r},{p.p_backward!r}" for p in points]
    return "\n".join(lines) + "\n"


def emit_report(report, path, fmt: str = "json") -> None:
    """Write a report, a list of reports, a suite summary or a curve."""
    if fmt == "csv":
        if isinstance(report, ExperimentSummary):
            text = report.records_csv()
        else:
            text = curve_csv(report)
    elif fmt == "json":
        if isinstance(report, InferenceReport):
            obj = report.to_dict()
        elif isinstance(report, ExperimentSummary):
            obj = report.to_dict()
        elif isinstance(report, list) and report and isinstance(report[0], InferenceReport):
            obj = {"reports": [r.to_dict() for r in report]}
        elif isinstance(report, list):
            obj = {"curve": [dataclasses.asdict(p) for p in report]}
        else:
            obj = report
        text = dumps(obj)
    else:
        raise UsageError(f"unknown format {fmt!r}")
    Path(path).write_text(text)


def load_reports(path) -> list[InferenceReport]:
    d = json.loads(Path(path).read_text())
    items = d["reports"] if "reports" in d else [d]
    return [InferenceReport.from_dict(r) for r in items]


# --------------------------------------------------------------------- main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _domain(text: str) -> ValueDomain:
    try:
        return ValueDomain.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--json-out", metavar="PATH")


def _regression_opts(p: argparse.ArgumentParser):
    p.add_argument("--max-sweeps", type=int, default=10)
    p.add_argument("--candidates", choices=(FULL_RANGE, TOP_K), default=FULL_RANGE)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--n-perm", type=int, default=10_000)
    p.add_argument("--no-fisher", action="store_true", help="always use the chi-square test")


def _input_opts(p: argparse.ArgumentParser):
    p.add_argument("csv", nargs="?", help="input file (omit with --preset)")
    p.add_argument("--x-col", default="0")
    p.add_argument("--y-col", default="1")
    p.add_argument("--header", action="store_true")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--x-domain", type=_domain, default=ValueDomain.integer())
    p.add_argument("--y-domain", type=_domain, default=ValueDomain.integer())
    p.add_argument("--limit", type=int)
    p.add_argument("--x-scale", type=int, help="multiply decimal X values and round half-up")
    p.add_argument("--y-scale", type=int, help="multiply decimal Y values and round half-up")
    p.add_argument("--preset", help="abalone:length | abalone:diameter | abalone:height")
    p.add_argument("--data", help="abalone file for --preset (default: cached download)")
    p.add_argument("--cache-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="discanm", description="Causal direction for discrete pairs via additive noise models.")
    parser.add_argument("--version", action="version", version=f"discanm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("infer", help="fit both directions and report a verdict")
    _input_opts(p)
    _regression_opts(p)
    _common(p)

    p = sub.add_parser("curve", help="p-values on growing prefixes of the data")
    _input_opts(p)
    _regression_opts(p)
    p.add_argument("--grid", help="comma-separated prefix sizes (default: every 100 rows)")
    p.add_argument("--csv-out", metavar="PATH")
    _common(p)

    p = sub.add_parser("simulate", help="run a synthetic suite")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--params", default="", help="e.g. 3,3 for DS1b or N1,9 for DS3a")
    p.add_argument("--n-models", type=int, default=100)
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv-out", metavar="PATH")
    _regression_opts(p)
    _common(p)

    p = sub.add_parser("oracle", help="population-level reversibility checks on a model file")
    p.add_argument("model")
    p.add_argument("--cap", type=int, default=10**7)
    _common(p)

    p = sub.add_parser("fetch", help="download a dataset into the cache")
    p.add_argument("name", choices=("abalone",))
    p.add_argument("--cache-dir")
    p.add_argument("--url")
    _common(p)
    return parser


def _config(args, **override) -> RegressionConfig:
    kw = dict(max_sweeps=args.max_sweeps, alpha=args.alpha, candidate_mode=args.candidates,
              top_k=args.top_k, n_perm=args.n_perm, seed=args.seed, fisher_fallback=not args.no_fisher)
    kw.update(override)
    try:
        return RegressionConfig(**kw)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _parse_param(tok: str):
    for conv in (int, float):
        try:
            return conv(tok)
        except ValueError:
            pass
    return tok


def _samples(args) -> list[tuple[str, PairedSample, dict]]:
    """(dataset id, sample, config overrides) for every run requested."""
    if args.preset:
        name, _, column = args.preset.partition(":")
        if name != "abalone" or not column:
            raise UsageError(f"unknown preset {args.preset!r}")
        path = args.data or fetch_dataset("abalone", args.cache_dir)
        limit = args.limit if args.limit is not None else ABALONE_ROWS
        # Sex has no natural order, so X is also tried as a 3-cyclic variable.
        # The published runs used the chi-square test throughout.
        return [
            (f"abalone:{column}", abalone_sample(path, column, limit=limit), {"fisher_fallback": False}),
            (f"abalone:{column}:cyclic-x", abalone_sample(path, column, ValueDomain.cyclic(3), limit=limit),
             {"fisher_fallback": False}),
        ]
    if not args.csv:
        raise UsageError("an input file or --preset is required")
    s = parse_csv(args.csv, args.x_col, args.y_col, header=args.header, delimiter=args.delimiter,
                  x_domain=args.x_domain, y_domain=args.y_domain, limit=args.limit,
                  x_scale=args.x_scale, y_scale=args.y_scale)
    return [(Path(args.csv).name, s, {})]


def _write(text: str, path: str | None):
    sys.stdout.write(text)
    if path:
        Path(path).write_text(text)


def run(args) -> int:
    if args.command == "infer":
        reports = [InferenceReport.build(name, s, _config(args, **ov)) for name, s, ov in _samples(args)]
        _write(dumps({"reports": [r.to_dict() for r in reports]}), args.json_out)
    elif args.command == "curve":
        out = []
        for name, s, ov in _samples(args):
            grid = ([int(t) for t in args.grid.split(",")] if args.grid
                    else list(range(100, len(s) + 1, 100)) or [len(s)])
            try:
                pts = pvalue_curve(s, grid, _config(args, **ov))
            except ValueError as e:
                raise UsageError(str(e)) from None
            out.append((name, pts))
            if args.csv_out:
                suffix = "" if len(out) == 1 else f".{len(out) - 1}"
                Path(args.csv_out + suffix).write_text(curve_csv(pts))
        doc = {"curves": {name: [dataclasses.asdict(p) for p in pts] for name, pts in out}}
        _write(dumps(doc), args.json_out)
    elif args.command == "simulate":
        params = tuple(_parse_param(t) for t in args.params.split(",") if t)
        try:
            spec = SuiteSpec(args.suite, params, args.n_models, args.n_samples, args.alpha, args.seed,
                             _config(args))
        except (ValueError, TypeError) as e:
            raise UsageError(str(e)) from None
        summary = run_suite(spec, workers=args.workers)
        if args.csv_out:
            Path(args.csv_out).write_text(summary.records_csv())
        _write(dumps(summary.to_dict()), args.json_out)
    elif args.command == "oracle":
        try:
            model = load_model(args.model)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as e:
            raise DataError(f"cannot load model {args.model}: {e}") from e
        bm = backward_search(model, cap=args.cap)
        doc = {
            "model": args.model,
            "reversible": bm is not None,
            "backward": None if bm is None else {
                "g": {str(k): v for k, v in bm.g.as_dict().items()},
                "noise": {str(k): str(v) for k, v in bm.noise_tilde.as_dict().items()},
            },
            "divisibility": divisibility_check(model),
            "example": nonidentifiable_example(model),
        }
        if not (model.x_domain.is_cyclic or model.y_domain.is_cyclic):
            dec = theorem1_decomposition(model)
            doc["decomposition"] = None if dec is None else {
                "classes": [list(c) for c in dec.classes], "shifts": list(dec.shifts), "levels": list(dec.levels)}
        _write(dumps(doc), args.json_out)
    elif args.command == "fetch":
        path = fetch_dataset(args.name, args.cache_dir, url=args.url)
        _write(dumps({"dataset": args.name, "path": str(path)}), args.json_out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except UsageError as e:
        print(f"discanm: error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"discanm: data error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        # Domain violations in input data surface as ValueError.
        print(f"discanm: data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
