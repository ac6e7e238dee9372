"""Command-line front end: ``volmix {ingest,analyze,fit-tail,predict,synth,collapse}``.

Every subcommand writes its artifacts under ``--out DIR`` together with a
``manifest.json`` recording which stage produced each file. Options can also
come from a ``key = value`` config file given with ``--config``; flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from volmix.distribution import collapse_metric, empirical_density, rescale
from volmix.ingest import FormatSpec, load_prices, write_prices
from volmix.mixture import (
    EmpiricalVolatility,
    LogNormal,
    ParetoTail,
    PointMass,
    StretchedExp,
    evaluate_scaling_function,
    log_asymptotic_tail,
    match_asymptote_amplitude,
    model_from_dict,
)
from volmix.returns import (
    autocorrelation,
    autocorrelation_band,
    log_returns,
    read_series_csv,
    windowed_volatility,
    write_series_csv,
)
from volmix.synth import SynthSpec, generate
from volmix.tailfit import (
    PowerLawFit,
    StretchedExpFit,
    fit_from_dict,
    fit_power_law,
    fit_stretched_exponential,
    select_tail_model,
)

log = logging.getLogger("volmix")

TAIL_MODELS = ("power_law", "stretched_exp", "auto")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    text = str(text).strip()
    return [int(x) for x in text.split(",") if x.strip()] if text else []


def _float_pair(text):
    if text is None or isinstance(text, (list, tuple)):
        return text
    parts = [float(x) for x in str(text).split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi', got {text!r}")
    return tuple(parts)


def _bool(text):
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class RunConfig:
    inputs: list = field(default_factory=list)
    timestamp_col: str = "timestamp"
    price_col: str | None = None
    timestamp_format: str = "auto"
    base_interval: int = 1
    window_length: int = 390
    scales: list = field(default_factory=lambda: [5, 15, 30, 60])
    tail_model: str = "auto"
    fit_range: tuple | None = None
    bins: int = 60
    out: str = "out"
    seed: int = 0
    include_cross_session: bool = False
    strict: bool = False

    _parsers = {"base_interval": int, "window_length": int, "scales": _int_list, "fit_range": _float_pair,
                "bins": int, "seed": int, "include_cross_session": _bool, "strict": _bool}

    def validate(self):
        if not self.scales:
            raise ConfigError("scales list is empty")
        if any(s < 1 for s in self.scales) or any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ConfigError(f"scales must be strictly increasing positive integers: {self.scales}")
        if self.window_length < 2:
            raise ConfigError("window_length must be >= 2")
        if self.tail_model not in TAIL_MODELS:
            raise ConfigError(f"tail_model must be one of {TAIL_MODELS}")
        if self.base_interval < 1:
            raise ConfigError("base_interval must be >= 1")
        return self

    def format_spec(self) -> FormatSpec:
        return FormatSpec(self.timestamp_col, self.price_col, self.timestamp_format, ",", self.strict,
                          self.base_interval, self.include_cross_session)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig()
    for key, value in values.items():
        if key not in known:
            continue
        parse = RunConfig._parsers.get(key)
        try:
            setattr(cfg, key, parse(value) if parse else value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return cfg.validate()


class Manifest:
    """Tracks artifacts of one run; rewritten after every stage."""

    def __init__(self, out_dir: Path, command: str, config: dict):
        self.path = out_dir / "manifest.json"
        self.data = {"command": command, "complete": False, "failed_stage": None,
                     "config": config, "artifacts": []}

    def add(self, path: Path, stage: str):
        self.data["artifacts"].append({"path": path.name, "stage": stage})

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, default=_jsonable))

    def finish(self, failed_stage=None):
        self.data["complete"] = failed_stage is None
        self.data["failed_stage"] = failed_stage
        self.write()


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, default=_jsonable))


class Run:
    def __init__(self, command: str, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest(self.out, command, cfg.to_dict())
        self.stage = None

    def artifact(self, name, stage=None):
        p = self.out / name
        self.manifest.add(p, stage or self.stage)
        return p

    def __call__(self, stage, fn, *a, **kw):
        self.stage = stage
        log.info("stage %s", stage)
        try:
            result = fn(*a, **kw)
        except ConfigError:
            self.manifest.finish(failed_stage=stage)
            raise
        except Exception as exc:
            self.manifest.finish(failed_stage=stage)
            raise StageError(stage, exc) from exc
        self.manifest.write()
        return result


# -- subcommand bodies ------------------------------------------------------

def _load(run: Run):
    if not run.cfg.inputs:
        raise ConfigError("no input file given")
    return load_prices(run.cfg.inputs[0], run.cfg.format_spec())


def cmd_ingest(cfg: RunConfig) -> int:
    run = Run("ingest", cfg)

    def stage():
        s = _load(run)
        write_prices(s, run.artifact("prices.csv"))
        _write_json(run.artifact("ingest.json"), {
            "source": str(cfg.inputs[0]), "samples": len(s), "dropped_rows": s.dropped_rows,
            "sessions": int(s.session_breaks.size + 1), "session_breaks": s.session_breaks.tolist(),
            "base_interval": s.base_interval})

    run("ingest", stage)
    run.manifest.finish()
    return 0


def fit_tail(sigmas, cfg: RunConfig):
    """Fit the configured tail model; returns ``(model_name, fit_dict, fit_object)``."""
    sigmas = np.asarray(sigmas, dtype=float)
    sigmas = sigmas[sigmas > 0]
    choice = cfg.tail_model
    selection = None
    pl = se = None
    if choice == "auto":
        choice, pl, se, selection = select_tail_model(sigmas, bin_count=cfg.bins)
        if choice == "stretched_exp" and cfg.fit_range is not None:
            se = None
    if choice == "power_law":
        pl = pl or fit_power_law(sigmas)
        best = pl
    else:
        if se is None:
            dist = empirical_density(sigmas, "absolute", cfg.bins)
            se = fit_stretched_exponential(dist, cfg.fit_range)
        best = se
    d = best.to_dict()
    lo = best.x_min if isinstance(best, PowerLawFit) else best.fit_range[0]
    d["diagnostics"]["tail_fraction"] = float(np.mean(sigmas >= lo))
    if selection is not None:
        d["selection"] = selection
    return choice, d, best


def tail_model_from_fit(fit) -> "ParetoTail | StretchedExp":
    if isinstance(fit, PowerLawFit):
        return ParetoTail(fit.alpha, fit.x_min)
    return StretchedExp(fit.lam, fit.beta, fit.fit_range[0])


def prediction_table(z, empirical_model=None, tail_fit=None, tail_fraction=1.0):
    """Columns of the prediction CSV for a grid of positive ``z``."""
    cols = {"z": np.asarray(z, dtype=float)}
    if empirical_model is not None:
        cols["density"] = evaluate_scaling_function(empirical_model, z)
    if tail_fit is not None:
        tm = tail_model_from_fit(tail_fit)
        cols["tail_model_density"] = tail_fraction * evaluate_scaling_function(tm, z)
        if isinstance(tail_fit, StretchedExpFit):
            # amplitude matched where the saddle point sits at 3x the fit cutoff
            z_ref = math.sqrt(tm.lam * tm.beta * (3 * tm.sigma_lo) ** (tm.beta + 2))
            amp = tail_fraction * match_asymptote_amplitude(tm, z_ref)
            with np.errstate(over="ignore"):
                cols["asymptote"] = amp * np.exp(log_asymptotic_tail(z, tm.lam, tm.beta))
            cols["asymptote"][np.asarray(z) < z_ref] = np.nan
    return cols


def write_table(path: Path, cols: dict):
    names = list(cols)
    rows = zip(*(np.asarray(cols[n]).tolist() for n in names))
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_table(path) -> dict:
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
    return {n: data[:, i] for i, n in enumerate(names)}


def cmd_analyze(cfg: RunConfig) -> int:
    run = Run("analyze", cfg)
    summary = {}

    series = run("ingest", _load, run)
    summary["samples"] = len(series)
    summary["dropped_rows"] = series.dropped_rows
    summary["sessions"] = int(series.session_breaks.size + 1)

    def returns_stage():
        base = log_returns(series, 1)
        vol = windowed_volatility(base, cfg.window_length)
        if len(vol) == 0:
            raise ValueError(f"no session holds a full window of {cfg.window_length} returns")
        write_series_csv(vol.window_starts, vol.sigmas, run.artifact("volatility.csv"))
        by_scale = {n: log_returns(series, n) for n in cfg.scales}
        acf = autocorrelation(base.values, 20)
        acf_abs = autocorrelation(np.abs(base.values), 20)
        _write_json(run.artifact("stylized_facts.json"), {
            "n_returns": len(base), "noise_band": 3 / math.sqrt(len(base)),
            "acf_returns": acf[1:], "acf_abs_returns": acf_abs[1:],
            "robust_band": autocorrelation_band(base.values, 20)})
        return base, vol, by_scale

    base, vol, by_scale = run("returns", returns_stage)
    summary["base_returns"] = len(base)
    summary["windows"] = len(vol)
    summary["window_length"] = cfg.window_length

    def distribution_stage():
        vdist = empirical_density(vol.sigmas, "absolute", cfg.bins, min_samples=2)
        vdist.to_csv(run.artifact("volatility_density.csv"))
        _write_json(run.artifact("volatility_density.json"), vdist.to_dict())
        for n, rs in by_scale.items():
            d = empirical_density(rs.values, "absolute", cfg.bins)
            d.to_csv(run.artifact(f"returns_abs_n{n}.csv"))
            rescale(d, n).to_csv(run.artifact(f"returns_abs_rescaled_n{n}.csv"))
            empirical_density(rs.values, "signed", cfg.bins).to_csv(run.artifact(f"returns_signed_n{n}.csv"))
        return vdist

    vdist = run("distribution", distribution_stage)

    def fit_stage():
        choice, d, fit = fit_tail(vol.sigmas, cfg)
        _write_json(run.artifact("tail_fit.json"), d)
        return choice, d, fit

    choice, fit_dict, fit = run("tailfit", fit_stage)
    summary["tail_model"] = choice
    summary.update({k: v for k, v in fit_dict["parameters"].items()})
    summary.update({k: v for k, v in fit_dict["diagnostics"].items()})

    def predict_stage():
        model = EmpiricalVolatility.from_distribution(vdist)
        z_all = np.abs(np.concatenate([rescale(rs, n) for n, rs in by_scale.items()]))
        z_all = z_all[z_all > 0]
        z = np.geomspace(np.quantile(z_all, 0.01), z_all.max(), 200)
        cols = prediction_table(z, model, fit, fit_dict["diagnostics"]["tail_fraction"])
        write_table(run.artifact("prediction.csv"), cols)
        _write_json(run.artifact("volatility_model.json"), model.to_dict())

    run("predict", predict_stage)

    def collapse_stage():
        rep = collapse_metric(by_scale) if len(by_scale) >= 2 else None
        if rep is None:
            raise ValueError("collapse needs at least two scales")
        rep.to_json(run.artifact("collapse.json"))
        return rep

    rep = run("collapse", collapse_stage)
    summary["collapse_max_distance"] = rep.max_distance
    summary["scales"] = rep.scales

    def summary_stage():
        _write_json(run.artifact("summary.json"), summary)
        lines = [f"{k}: {json.dumps(v, default=_jsonable)}" for k, v in summary.items()]
        run.artifact("summary.txt").write_text("\n".join(lines) + "\n")
        print("\n".join(lines))

    run("summary", summary_stage)
    run.manifest.finish()
    return 0


def cmd_fit_tail(cfg: RunConfig) -> int:
    run = Run("fit-tail", cfg)

    def stage():
        if not cfg.inputs:
            raise ConfigError("no input file given")
        _, values = read_series_csv(cfg.inputs[0])
        _, d, _ = fit_tail(values, cfg)
        _write_json(run.artifact("tail_fit.json"), d)
        print(json.dumps(d, indent=2, default=_jsonable))

    run("tailfit", stage)
    run.manifest.finish()
    return 0


def _load_model_or_fit(path):
    d = json.loads(Path(path).read_text())
    if "kind" in d:
        return model_from_dict(d), None, 1.0
    fit = fit_from_dict(d)
    return None, fit, d.get("diagnostics", {}).get("tail_fraction", 1.0)


def cmd_predict(cfg: RunConfig, model_path, z_min, z_max, points) -> int:
    run = Run("predict", cfg)

    def stage():
        model, fit, frac = _load_model_or_fit(model_path)
        if not 0 < z_min < z_max:
            raise ConfigError("need 0 < z-min < z-max")
        z = np.geomspace(z_min, z_max, points)
        cols = prediction_table(z, model, fit, frac)
        write_table(run.artifact("prediction.csv"), cols)

    run("predict", stage)
    run.manifest.finish()
    return 0


def model_from_args(args):
    kind = args.model
    if kind == "point_mass":
        return PointMass(args.sigma0)
    if kind == "lognormal":
        return LogNormal(args.mu, args.s)
    if kind == "pareto_tail":
        return ParetoTail(args.alpha, args.sigma_min)
    if kind == "stretched_exp":
        return StretchedExp(args.lam, args.beta, args.sigma_lo)
    raise ConfigError(f"unknown model {kind!r}")


def cmd_synth(cfg: RunConfig, model, total_returns, initial_price) -> int:
    run = Run("synth", cfg)

    def stage():
        spec = SynthSpec(model, cfg.window_length, total_returns, cfg.seed, initial_price)
        series, true = generate(spec)
        write_prices(series, run.artifact("prices.csv"))
        write_series_csv(true.window_starts, true.sigmas, run.artifact("true_sigmas.csv"))
        _write_json(run.artifact("truth.json"), {
            "model": model.to_dict(), "window_length": spec.window_length,
            "total_returns": spec.total_returns, "seed": spec.seed, "initial_price": spec.initial_price})

    run("synth", stage)
    run.manifest.finish()
    return 0


def cmd_collapse(cfg: RunConfig) -> int:
    run = Run("collapse", cfg)
    series = run("ingest", _load, run)

    def stage():
        rep = collapse_metric({n: log_returns(series, n) for n in cfg.scales})
        rep.to_json(run.artifact("collapse.json"))
        print(json.dumps(rep.to_dict(), indent=2))

    run("collapse", stage)
    run.manifest.finish()
    return 0


# -- argument parsing -------------------------------------------------------

def _add_common(p, inputs=True):
    if inputs:
        p.add_argument("inputs", nargs="*", default=None, help="input CSV file")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--timestamp-col", dest="timestamp_col")
    p.add_argument("--price-col", dest="price_col", help="default: close if present, else price")
    p.add_argument("--timestamp-format", dest="timestamp_format", choices=["auto", "iso", "epoch"])
    p.add_argument("--base-interval", dest="base_interval", type=int, help="minutes per sample")
    p.add_argument("--window-length", dest="window_length", type=int, help="returns per volatility window")
    p.add_argument("--scales", help="comma-separated aggregation levels, e.g. 5,15,30,60")
    p.add_argument("--tail-model", dest="tail_model", choices=TAIL_MODELS)
    p.add_argument("--fit-range", dest="fit_range", help="stretched-exponential fit range 'lo,hi'")
    p.add_argument("--bins", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--include-cross-session", dest="include_cross_session", action="store_const", const=True,
                   help="ignore session breaks when forming returns")
    p.add_argument("--strict", action="store_const", const=True, help="reject unsorted or duplicate timestamps")


def make_parser():
    parser = argparse.ArgumentParser(prog="volmix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("ingest", "validate and canonicalize a price file"),
                           ("analyze", "run the full pipeline on a price file"),
                           ("fit-tail", "fit a tail model to a timestamp,value CSV"),
                           ("collapse", "collapse statistic across scales")):
        _add_common(sub.add_parser(name, help=helptext))

    p = sub.add_parser("predict", help="evaluate the scaling function for a model or tail fit")
    _add_common(p, inputs=False)
    p.add_argument("--model-json", dest="model_json", required=True,
                   help="tail_fit.json or a volatility model JSON with a 'kind' key")
    p.add_argument("--z-min", dest="z_min", type=float, required=True)
    p.add_argument("--z-max", dest="z_max", type=float, required=True)
    p.add_argument("--points", type=int, default=200)

    p = sub.add_parser("synth", help="generate conditionally independent synthetic prices")
    _add_common(p, inputs=False)
    p.add_argument("--model", required=True, choices=["point_mass", "lognormal", "pareto_tail", "stretched_exp"])
    p.add_argument("--total-returns", dest="total_returns", type=int, required=True)
    p.add_argument("--initial-price", dest="initial_price", type=float, default=100.0)
    p.add_argument("--sigma0", type=float, default=1e-3)
    p.add_argument("--mu", type=float, default=math.log(1e-3))
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--sigma-min", dest="sigma_min", type=float, default=1e-3)
    p.add_argument("--lam", type=float, default=61.38)
    p.add_argument("--beta", type=float, default=0.1772)
    p.add_argument("--sigma-lo", dest="sigma_lo", type=float, default=1e-3)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "fit-tail":
            return cmd_fit_tail(cfg)
        if args.command == "collapse":
            return cmd_collapse(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.model_json, args.z_min, args.z_max, args.points)
        if args.command == "synth":
            return cmd_synth(cfg, model_from_args(args), args.total_returns, args.initial_price)
    except ConfigError as exc:
        print(f"volmix: config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"volmix: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"volmix: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
