"""Command-line front end.

Every subcommand writes one table (CSV or JSON) preceded by the library
version and the fully resolved configuration.  Settings come from built-in
defaults, then an optional JSON file given with ``--config``, then explicit
flags.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 invariant violation.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .bands import compute_bands
from .decay import decay_fit, phase_peaks
from .discrete import kernel_main_term as discrete_main
from .discrete import kernel_numeric as discrete_numeric
from .discrete import line_kernel, peak_times
from .edge import QuantumTreeModel
from .errors import ConvergenceError, DomainError, InvariantError, TreeDispError
from .quantum import KernelQuery, free_line_kernel, free_line_numeric
from .quantum import kernel_main_term as quantum_main
from .quantum import kernel_numeric as quantum_numeric
from .stationary_phase import (endpoint_estimate, fresnel_problem, oscillatory_integral,
                               tree_phase_problem)

TASKS = ("discrete-kernel", "quantum-kernel", "bands", "sp-check", "decay-fit", "line-check")
EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_INVARIANT = 2, 3, 4


@dataclass
class RunConfig:
    """Resolved settings of one CLI run."""

    task: str
    q: int = 2
    edge_length: float = 1.0
    alpha: float = 0.0
    potential: str = "zero"
    t_min: float = 1.0
    t_max: float = 100.0
    t_count: int = 8
    t_peaks: bool = False
    distance: int = 0
    query: str = "diag"
    n_bands: int = 40
    route: str = "auto"
    problem: str = "fresnel:1,1"
    source: str = "discrete"
    velocity: float = 0.0
    tol: float = 1e-11
    min_steps: int = 64
    step_density: float = 2.0
    format: str = "csv"
    out: str | None = None
    extra: dict = field(default_factory=dict, repr=False)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise DomainError(f"unknown task {self.task!r}")
        if self.format not in ("csv", "json"):
            raise DomainError(f"unknown format {self.format!r}")
        if self.t_count < 1:
            raise DomainError("t_count must be positive")
        if self.t_max < self.t_min:
            raise DomainError("t_max must not be below t_min")
        if self.n_bands < 1:
            raise DomainError("n_bands must be at least 1")
        if self.distance < 0:
            raise DomainError("distance must be nonnegative")
        if self.route not in ("auto", "bessel", "theta"):
            raise DomainError(f"unknown route {self.route!r}")
        if self.source not in ("discrete", "quantum", "line"):
            raise DomainError(f"unknown decay-fit source {self.source!r}")

    def resolved(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d.pop("out")
        return d

    def model(self) -> QuantumTreeModel:
        return QuantumTreeModel(self.q, self.edge_length, self.alpha, self.potential,
                                min_steps=self.min_steps, step_density=self.step_density)


def _check_grid(t: np.ndarray, positive: bool) -> np.ndarray:
    if t.size == 0:
        raise DomainError("empty time grid")
    if np.any(np.diff(t) <= 0):
        raise DomainError("time grid must be strictly increasing")
    if positive and np.any(t <= 0):
        raise DomainError("asymptotic tasks need positive times")
    return t


def _uniform_grid(cfg: RunConfig) -> np.ndarray:
    if cfg.t_count == 1:
        return np.array([cfg.t_min])
    if cfg.t_min > 0:
        return np.geomspace(cfg.t_min, cfg.t_max, cfg.t_count)
    return np.linspace(cfg.t_min, cfg.t_max, cfg.t_count)


def _quantum_peaks(cfg: RunConfig, model: QuantumTreeModel) -> np.ndarray:
    # both endpoint terms of band 1 in phase: (b_1 - a_1) t = 3 pi / 2 mod 2 pi
    b1 = compute_bands(model, 1)[0]
    return phase_peaks(b1.b - b1.a, 1.5 * math.pi, cfg.t_min, cfg.t_max, cfg.t_count)


def _line_peaks(cfg: RunConfig) -> np.ndarray:
    # |J_n(2t)| peaks near 2t - n pi / 2 - pi / 4 = 0 mod pi
    off = 0.25 * math.pi + 0.5 * math.pi * cfg.distance
    return phase_peaks(2.0, off % (2 * math.pi), cfg.t_min, cfg.t_max, cfg.t_count)


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _task_discrete(cfg: RunConfig):
    n = cfg.distance
    t = (peak_times(n, cfg.q, cfg.t_min, cfg.t_max, cfg.t_count) if cfg.t_peaks
         else _uniform_grid(cfg))
    t = _check_grid(t, positive=False)
    cols = ["t", "n", "re", "im", "abs", "main_re", "main_im", "residual"]
    rows = []
    for ti in t:
        k = discrete_numeric(ti, n, cfg.q, tol=cfg.tol)
        m = discrete_main(ti, n, cfg.q) if ti > 0 else complex("nan")
        rows.append([ti, n, k.real, k.imag, abs(k), m.real, m.imag, abs(k - m)])
    return cols, rows, None


def _task_quantum(cfg: RunConfig):
    model = cfg.model()
    query = KernelQuery.parse(cfg.query)
    t = _quantum_peaks(cfg, model) if cfg.t_peaks else _uniform_grid(cfg)
    t = _check_grid(t, positive=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        num = quantum_numeric(model, t, query, cfg.n_bands, route=cfg.route)
    main = quantum_main(model, t, query, cfg.n_bands)
    cols = ["t", "n_bands", "re", "im", "abs", "main_re", "main_im", "residual", "tail_bound"]
    rows = [[ti, cfg.n_bands, v.real, v.imag, abs(v), m.real, m.imag, abs(v - m), tb]
            for ti, v, m, tb in zip(t, num.value, main.value, num.tail_bound)]
    return cols, rows, None


def _task_bands(cfg: RunConfig):
    bands = compute_bands(cfg.model(), cfg.n_bands)
    cols = ["n", "a", "b", "delta", "w_sign", "wp_a", "wp_b", "s_a", "s_b"]
    rows = [[b.n, b.a, b.b, b.dirichlet_above, b.w_sign, b.wp_a, b.wp_b, b.s_a, b.s_b]
            for b in bands]
    return cols, rows, None


def _phase_problem(spec: str, q: int):
    head, _, rest = spec.partition(":")
    if head == "fresnel":
        try:
            alpha, A = (float(v) for v in rest.split(","))
        except ValueError:
            raise DomainError(f"expected fresnel:ALPHA,A, got {spec!r}") from None
        return fresnel_problem(alpha, A)
    if head == "tree":
        half = rest or "left"
        if half not in ("left", "right"):
            raise DomainError(f"expected tree:left or tree:right, got {spec!r}")
        return tree_phase_problem(q, half)
    raise DomainError(f"unknown phase problem {spec!r}")


def _task_sp(cfg: RunConfig):
    prob = _phase_problem(cfg.problem, cfg.q)
    t = _check_grid(_uniform_grid(cfg), positive=True)
    cols = ["t", "numeric_re", "numeric_im", "main_re", "main_im", "error", "bound",
            "bound_satisfied"]
    rows = []
    for ti in t:
        est = endpoint_estimate(prob, ti)
        val = oscillatory_integral(prob.p, prob.amp, prob.a, prob.b, ti)
        err = abs(val - est.main)
        rows.append([ti, val.real, val.imag, est.main.real, est.main.imag, err, est.bound,
                     bool(err <= est.bound)])
    return cols, rows, None


def _task_decay(cfg: RunConfig):
    if cfg.source == "discrete":
        t = (peak_times(cfg.distance, cfg.q, cfg.t_min, cfg.t_max, cfg.t_count)
             if cfg.t_peaks else _uniform_grid(cfg))
        t = _check_grid(t, positive=True)
        mag = np.array([abs(discrete_numeric(ti, cfg.distance, cfg.q, tol=cfg.tol)) for ti in t])
    elif cfg.source == "quantum":
        model = cfg.model()
        t = _quantum_peaks(cfg, model) if cfg.t_peaks else _uniform_grid(cfg)
        t = _check_grid(t, positive=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mag = np.abs(quantum_numeric(model, t, KernelQuery.parse(cfg.query),
                                         cfg.n_bands, route=cfg.route).value)
    else:
        t = _line_peaks(cfg) if cfg.t_peaks else _uniform_grid(cfg)
        t = _check_grid(t, positive=True)
        mag = np.array([abs(line_kernel(ti, cfg.distance)) for ti in t])
    fit = decay_fit(t, mag)
    cols = ["t", "magnitude", "log_residual"]
    rows = [[ti, mi, ri] for ti, mi, ri in zip(t, mag, fit.residuals)]
    summary = {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
               "samples": int(t.size)}
    return cols, rows, summary


def _task_line(cfg: RunConfig):
    t = _check_grid(_uniform_grid(cfg), positive=True)
    v = cfg.velocity
    cols = ["t", "v", "numeric_re", "numeric_im", "closed_re", "closed_im", "error"]
    rows = []
    for ti in t:
        num = free_line_numeric(ti, v)
        ref = free_line_kernel(ti, v)
        rows.append([ti, v, num.real, num.imag, ref.real, ref.imag, abs(num - ref)])
    return cols, rows, None


_RUNNERS = {
    "discrete-kernel": _task_discrete,
    "quantum-kernel": _task_quantum,
    "bands": _task_bands,
    "sp-check": _task_sp,
    "decay-fit": _task_decay,
    "line-check": _task_line,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def render(cfg: RunConfig, cols, rows, summary) -> str:
    """Serialize a result table in the configured format."""
    meta = {"version": __version__, "config": cfg.resolved()}
    if cfg.format == "json":
        doc = {**meta, "columns": cols, "rows": [[_json_cell(v) for v in r] for r in rows]}
        if summary is not None:
            doc["summary"] = {k: _json_cell(v) for k, v in summary.items()}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# treedisp {__version__}\n")
    buf.write(f"# config: {json.dumps(meta['config'], sort_keys=True)}\n")
    if summary is not None:
        buf.write("# summary: " + ",".join(f"{k}={_cell(v)}" for k, v in summary.items()) + "\n")
    buf.write(",".join(cols) + "\n")
    for r in rows:
        buf.write(",".join(_cell(v) for v in r) + "\n")
    return buf.getvalue()


def run(cfg: RunConfig) -> str:
    """Execute a validated configuration and return the rendered table."""
    cfg.validate()
    cols, rows, summary = _RUNNERS[cfg.task](cfg)
    return render(cfg, cols, rows, summary)


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default settings")
    common.add_argument("--q", type=int)
    common.add_argument("--edge-length", type=float)
    common.add_argument("--alpha", type=float, help="vertex coupling constant")
    common.add_argument("--potential", help="zero | cosine:A | well:DEPTH,WIDTH | table:PATH")
    common.add_argument("--t-min", type=float)
    common.add_argument("--t-max", type=float)
    common.add_argument("--t-count", type=int)
    common.add_argument("--t-peaks", action="store_const", const=True,
                        help="sample the oscillation peaks instead of a log grid")
    common.add_argument("--distance", type=int, help="graph distance n")
    common.add_argument("--query", help="diag | same-edge:x,y | edges:k,x,y")
    common.add_argument("--n-bands", type=int)
    common.add_argument("--route", choices=("auto", "bessel", "theta"))
    common.add_argument("--problem", help="sp-check problem: fresnel:ALPHA,A | tree:left|right")
    common.add_argument("--source", choices=("discrete", "quantum", "line"),
                        help="decay-fit data source")
    common.add_argument("--velocity", type=float, help="line-check v = |x - y| / t")
    common.add_argument("--tol", type=float)
    common.add_argument("--min-steps", type=int)
    common.add_argument("--step-density", type=float)
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--out", help="output path (default: stdout)")

    parser = argparse.ArgumentParser(prog="treedisp",
                                     description="Evolution kernels on regular trees.")
    parser.add_argument("--version", action="version", version=f"treedisp {__version__}")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sub.add_parser(task, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise DomainError("config file must hold a JSON object")
        values.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key, val in vars(args).items():
        if key not in ("config", "task") and val is not None:
            values[key] = val
    known = set(RunConfig.__dataclass_fields__) - {"task", "extra"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise DomainError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(task=args.task, **values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        text = run(cfg)
    except (DomainError, TypeError) as exc:
        print(f"treedisp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"treedisp: no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except InvariantError as exc:
        print(f"treedisp: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except TreeDispError as exc:
        print(f"treedisp: {exc}", file=sys.stderr)
        return 1
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
