"""Command-line driver: ``chaosrc {generate,train,predict,bench,model inspect}``.

Each subcommand resolves its settings as built-in defaults, then an optional
JSON ``--config`` file (unknown keys are rejected), then explicit flags. The
resolved settings go into a ``*.manifest.json`` written next to the outputs,
together with seeds and SHA-256 hashes of inputs and outputs. A manifest can
be passed back as ``--config`` to replay the run.

Relative output paths are placed under ``--out-dir``, else ``$CHAOSRC_OUTPUT_DIR``,
else the working directory. Outputs are written to temporary files and moved
into place only when the whole command succeeds.

Exit codes: 0 success, 1 a benchmark gate failed, 2 invalid input or error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, bench, dynsys, snapshot
from .errors import ChaosRCError, ConfigError
from .features import FeatureConfig, plan_features
from .metrics import valid_time, write_error_curve
from .readout import EsnConfig, predict_closed_loop, train_model
from .timeseries import TimeSeries, load, write_ccts, write_csv

OUTPUT_DIR_ENV = "CHAOSRC_OUTPUT_DIR"

log = logging.getLogger("chaosrc")

# name -> (converter, default). A default of REQUIRED must be supplied.
REQUIRED = object()


def _floats3(v):
    vals = [float(x) for x in (v.split(",") if isinstance(v, str) else v)]
    if len(vals) != 3:
        raise ValueError("expected three comma-separated numbers")
    return vals


def _choice(*options):
    def conv(v):
        if v not in options:
            raise ValueError(f"must be one of {options}")
        return v
    return conv


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes", "on"):
        return True
    if str(v).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _opt(conv):
    return lambda v: None if v is None else conv(v)


SCHEMAS = {
    "generate": {
        "system": (_choice("lorenz", "ks"), REQUIRED),
        "steps": (int, REQUIRED),
        "seed": (int, 0),
        "dt": (_opt(float), None),
        "transient": (_opt(int), None),
        "sigma": (float, 10.0),
        "rho": (float, 28.0),
        "beta": (float, 8.0 / 3.0),
        "x0": (_floats3, [1.0, 1.0, 1.0]),
        "L": (float, 22.0),
        "Q": (int, 64),
        "format": (_opt(_choice("ccts", "csv")), None),
        "out": (_opt(str), None),
        "out_dir": (_opt(str), None),
    },
    "train": {
        "data": (str, REQUIRED),
        "model": (_choice(*bench.MODELS), "heng_rc"),
        "k": (int, 1),
        "constant": (_bool, False),
        "wrap": (_choice("periodic", "clamped"), "periodic"),
        "variant": (_choice("full", "first_dim_only"), "full"),
        "delay_offset": (int, 0),
        "n_nodes": (int, 28),
        "leak_rate": (float, 1.0),
        "spectral_radius": (float, 0.9),
        "input_scale": (float, 0.1),
        "bias_scale": (float, 1.0),
        "degree": (float, 3.0),
        "seed": (int, 0),
        "lam": (_opt(float), None),
        "target_mode": (_choice("next_state", "delta"), "next_state"),
        "normalize": (_opt(_bool), None),
        "washout": (int, 100),
        "train_steps": (_opt(int), None),
        "out": (_opt(str), None),
        "out_dir": (_opt(str), None),
    },
    "predict": {
        "model": (str, REQUIRED),
        "warmup": (str, REQUIRED),
        "steps": (int, REQUIRED),
        "warmup_steps": (_opt(int), None),
        "truth": (_opt(str), None),
        "theta": (float, 0.3),
        "lyapunov": (_opt(float), None),
        "format": (_opt(_choice("ccts", "csv")), None),
        "out": (_opt(str), None),
        "out_dir": (_opt(str), None),
    },
    "bench": {
        "suite": (_opt(_choice(*bench.SUITES, "all")), None),
        "experiment": (_opt(dict), None),
        "seed": (int, 0),
        "trials": (_opt(int), None),
        "out_dir": (_opt(str), None),
    },
}


# --- settings resolution ------------------------------------------------------

def _read_config(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "manifest_version" in doc:
        if doc.get("command") != command:
            raise ConfigError(f"manifest {path} records command {doc.get('command')!r}, not {command!r}")
        doc = doc["config"]
    return doc


def resolve(command: str, config_path: str | None, flags: dict) -> dict:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    schema = SCHEMAS[command]
    layer = _read_config(config_path, command) if config_path else {}
    unknown = set(layer) - set(schema)
    if unknown:
        raise ConfigError(f"unknown {command} config keys: {sorted(unknown)}")
    merged = {}
    for name, (conv, default) in schema.items():
        if flags.get(name) is not None:
            value = flags[name]
        elif name in layer:
            value = layer[name]
        elif default is REQUIRED:
            raise ConfigError(f"{command}: missing required setting {name!r}")
        else:
            merged[name] = default
            continue
        try:
            merged[name] = conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{command}: bad value for {name!r} ({value!r}): {exc}") from exc
    return merged


def output_dir(settings: dict) -> Path:
    return Path(settings.get("out_dir") or os.environ.get(OUTPUT_DIR_ENV) or ".")


def _place(settings: dict, default_name: str) -> Path:
    out = Path(settings["out"]) if settings.get("out") else Path(default_name)
    return out if out.is_absolute() else output_dir(settings) / out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Outputs:
    """Stage files under temporary names; publish all or nothing."""

    def __init__(self):
        self._staged: list[tuple[Path, Path]] = []

    def stage(self, final: Path) -> Path:
        final = Path(final)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(f".{final.name}.partial-{os.getpid()}")
        self._staged.append((tmp, final))
        return tmp

    def hashes(self) -> dict:
        return {str(final): sha256_file(tmp) for tmp, final in self._staged}

    def commit(self) -> None:
        for tmp, final in self._staged:
            os.replace(tmp, final)
        self._staged = []

    def discard(self) -> None:
        for tmp, _ in self._staged:
            if tmp.exists():
                tmp.unlink()
        self._staged = []


def _write_series(series: TimeSeries, outputs: Outputs, final: Path, fmt: str | None) -> None:
    fmt = fmt or ("csv" if final.suffix.lower() == ".csv" else "ccts")
    (write_csv if fmt == "csv" else write_ccts)(series, outputs.stage(final))


def _load_series(path: str) -> TimeSeries:
    if not Path(path).is_file():
        raise ConfigError(f"input file not found: {path}")
    return load(path)


def _manifest(outputs: Outputs, final: Path, command: str, settings: dict, seeds: dict,
              inputs: dict, extra: dict | None = None) -> None:
    doc = {
        "manifest_version": 1,
        "tool": "chaosrc",
        "tool_version": __version__,
        "command": command,
        "config": settings,
        "seeds": seeds,
        "inputs": inputs,
        "outputs": outputs.hashes(),
    }
    if extra:
        doc.update(extra)
    tmp = outputs.stage(final)
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True, default=bench._json_default) + "\n")


# --- subcommands ------------------------------------------------------------

def cmd_generate(settings: dict, outputs: Outputs) -> int:
    steps, seed = settings["steps"], settings["seed"]
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if settings["system"] == "lorenz":
        transient = settings["transient"] or 0
        params = dynsys.LorenzParams(settings["sigma"], settings["rho"], settings["beta"],
                                     settings["dt"] or 0.01, tuple(settings["x0"]))
        full = dynsys.lorenz_generate(params, transient + steps)
        series = TimeSeries(full.data[:, transient:], params.dt)
        seeds = {"root": seed}
    else:
        params = dynsys.KsParams(settings["L"], settings["Q"], settings["dt"] or 0.25,
                                 transient_steps=1000 if settings["transient"] is None else settings["transient"])
        series = dynsys.ks_generate(params, steps, seed=seed)
        seeds = {"root": seed, "initial_profile": seed}
    ext = ".csv" if settings["format"] == "csv" else ".ccts"
    final = _place(settings, f"{settings['system']}_seed{seed}{ext}")
    _write_series(series, outputs, final, settings["format"])
    _manifest(outputs, final.with_name(final.name + ".manifest.json"), "generate", settings, seeds, {})
    print(f"wrote {final} ({series.q} x {series.length}, dt={series.dt!r})")
    return 0


def _model_config(settings: dict, q: int):
    if settings["model"] == "esn":
        return EsnConfig(settings["n_nodes"], q, settings["leak_rate"], settings["spectral_radius"],
                         settings["input_scale"], settings["bias_scale"], settings["degree"],
                         seed=settings["seed"])
    return plan_features(FeatureConfig(settings["model"], q, settings["k"], settings["constant"],
                                       neighbor_wrap=settings["wrap"], heng_variant=settings["variant"],
                                       delay_offset=settings["delay_offset"]))


def cmd_train(settings: dict, outputs: Outputs) -> int:
    series = _load_series(settings["data"])
    if settings["train_steps"] is not None:
        if not 2 <= settings["train_steps"] <= series.length:
            raise ConfigError(f"train_steps must be in [2, {series.length}]")
        series = series.slice(0, settings["train_steps"])
    model_cfg = _model_config(settings, series.q)
    lam = bench.DEFAULT_LAMBDA[settings["model"]] if settings["lam"] is None else settings["lam"]
    normalize = settings["model"] == "esn" if settings["normalize"] is None else settings["normalize"]
    model, summary = train_model(series, model_cfg, lam, settings["target_mode"],
                                 normalize=normalize, washout=settings["washout"])
    final = _place(settings, f"{settings['model']}.ccmd")
    snapshot.save_model(model, outputs.stage(final))
    resolved = dict(settings, lam=lam, normalize=normalize)
    _manifest(outputs, final.with_name(final.name + ".manifest.json"), "train", resolved,
              {"reservoir": settings["seed"]} if model.is_esn else {},
              {settings["data"]: sha256_file(settings["data"])},
              {"train_summary": {"n_samples": summary.n_samples, "fit_rmse": summary.fit_rmse,
                                 "normal_eq_residual": summary.normal_eq_residual,
                                 "features": model.feature_map.total_dim}})
    print(f"wrote {final} ({model.feature_map.total_dim} features, fit_rmse={summary.fit_rmse:.3e})")
    return 0


def cmd_predict(settings: dict, outputs: Outputs) -> int:
    if not Path(settings["model"]).is_file():
        raise ConfigError(f"input file not found: {settings['model']}")
    model = snapshot.load_model(settings["model"])
    warm = _load_series(settings["warmup"])
    truth = _load_series(settings["truth"]) if settings["truth"] else None
    if settings["warmup_steps"] is not None:
        warm = warm.slice(warm.length - settings["warmup_steps"])
    pred = predict_closed_loop(model, warm, settings["steps"])
    ext = ".csv" if settings["format"] == "csv" else ".ccts"
    final = _place(settings, f"prediction{ext}")
    _write_series(pred, outputs, final, settings["format"])
    inputs = {p: sha256_file(p) for p in (settings["model"], settings["warmup"], settings["truth"]) if p}
    extra = {"blew_up": pred.blew_up, "produced_steps": pred.length}
    if truth is not None:
        truth = TimeSeries(truth.data[:, :settings["steps"]], truth.dt)
        lyap = (dynsys.LyapunovEstimate.from_exponent(settings["lyapunov"])
                if settings["lyapunov"] is not None else None)
        report = valid_time(truth, TimeSeries(pred.data, pred.dt), settings["theta"], lyap)
        write_error_curve(report, pred.dt, outputs.stage(final.with_name(final.stem + "_error.csv")))
        if pred.length == truth.length:
            diff = TimeSeries(truth.data - pred.data, pred.dt)
            _write_series(diff, outputs, final.with_name(final.stem + "_difference" + final.suffix),
                          settings["format"])
        extra["valid_time"] = report.to_dict()
        print(f"valid_steps={report.valid_steps} valid_seconds={report.valid_seconds:g}"
              + (f" lyapunov_times={report.valid_lyapunov_times:.3f}" if lyap else ""))
    _manifest(outputs, final.with_name(final.name + ".manifest.json"), "predict", settings, {}, inputs, extra)
    print(f"wrote {final} ({pred.q} x {pred.length}{', blew up' if pred.blew_up else ''})")
    return 0


def _write_table(rows: list, path: Path) -> None:
    cols = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()})


def _suite_kwargs(name: str, settings: dict) -> dict:
    kw = {"seed": settings["seed"]}
    if settings["trials"] is not None and name in ("lorenz", "table1", "ks"):
        kw["n_trials"] = settings["trials"]
    return kw


def cmd_bench(settings: dict, outputs: Outputs) -> int:
    if (settings["suite"] is None) == (settings["experiment"] is None):
        raise ConfigError("bench needs exactly one of --suite or an 'experiment' config")
    out_dir = output_dir(settings)
    seeds = {"root": settings["seed"],
             "derivation": "SeedSequence([root, *labels]); str labels hashed with CRC32"}
    if settings["experiment"] is not None:
        doc = dict(settings["experiment"])
        doc.setdefault("seed", settings["seed"])
        if settings["trials"] is not None:
            doc["n_trials"] = settings["trials"]
        spec = bench.ExperimentSpec.from_dict(doc)
        report = bench.run_experiment(spec)
        stem = out_dir / spec.name
        bench.write_reports_csv([report], outputs.stage(stem.with_name(stem.name + "_trials.csv")))
        outputs.stage(stem.with_name(stem.name + ".json")).write_text(
            json.dumps(report.to_dict(), indent=2, default=bench._json_default) + "\n")
        resolved = dict(settings, experiment=spec.to_dict())
        _manifest(outputs, stem.with_name(stem.name + ".manifest.json"), "bench", resolved, seeds, {})
        s = report.summary()
        print(json.dumps(s, indent=2, default=bench._json_default))
        return 0
    names = list(bench.SUITES) if settings["suite"] == "all" else [settings["suite"]]
    ok = True
    for name in names:
        result = bench.SUITES[name](**_suite_kwargs(name, settings))
        ok &= result.passed
        stem = out_dir / name
        for tname, rows in result.tables.items():
            _write_table(rows, outputs.stage(out_dir / f"{name}_{tname}.csv" if tname != name
                                             else out_dir / f"{name}.csv"))
        if result.reports:
            bench.write_reports_csv(result.reports, outputs.stage(out_dir / f"{name}_trials.csv"))
        outputs.stage(stem.with_name(name + ".json")).write_text(bench.suite_to_json(result) + "\n")
        print(bench.format_gates(result))
    _manifest(outputs, out_dir / f"{settings['suite']}.manifest.json", "bench", settings, seeds, {},
              {"passed": ok})
    return 0 if ok else 1


def cmd_inspect(path: str) -> int:
    if not Path(path).is_file():
        raise ConfigError(f"input file not found: {path}")
    print(snapshot.describe(snapshot.load_model(path)))
    return 0


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chaosrc", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"chaosrc {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON settings file (or a manifest to replay)")
        sp.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")

    g = sub.add_parser("generate", help="integrate a system and write its trajectory")
    common(g)
    g.add_argument("system", nargs="?", choices=("lorenz", "ks"))
    g.add_argument("--steps", type=int, help="integration steps; the file holds steps+1 states")
    g.add_argument("--seed", type=int)
    g.add_argument("--dt", type=float)
    g.add_argument("--transient", type=int, help="steps discarded first (ks default 1000, lorenz 0)")
    g.add_argument("--sigma", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--x0", help="Lorenz initial state, e.g. 1,1,1")
    g.add_argument("--L", type=float, help="KS domain length")
    g.add_argument("--Q", type=int, help="KS grid points")
    g.add_argument("--format", choices=("ccts", "csv"))
    g.add_argument("--out")

    t = sub.add_parser("train", help="fit a readout and write a CCMD snapshot")
    common(t)
    t.add_argument("--data", help="training series (CCTS or .csv)")
    t.add_argument("--model", choices=bench.MODELS)
    t.add_argument("--k", type=int, help="delay blocks")
    t.add_argument("--constant", action="store_const", const=True, help="add a constant feature")
    t.add_argument("--wrap", choices=("periodic", "clamped"))
    t.add_argument("--variant", choices=("full", "first_dim_only"))
    t.add_argument("--delay-offset", dest="delay_offset", type=int)
    t.add_argument("--n-nodes", dest="n_nodes", type=int)
    t.add_argument("--leak-rate", dest="leak_rate", type=float)
    t.add_argument("--spectral-radius", dest="spectral_radius", type=float)
    t.add_argument("--input-scale", dest="input_scale", type=float)
    t.add_argument("--bias-scale", dest="bias_scale", type=float)
    t.add_argument("--degree", type=float, help="mean reservoir connections per node")
    t.add_argument("--seed", type=int, help="reservoir seed")
    t.add_argument("--lam", type=float, help="ridge parameter")
    t.add_argument("--target-mode", dest="target_mode", choices=("next_state", "delta"))
    t.add_argument("--normalize", dest="normalize", action="store_const", const=True)
    t.add_argument("--no-normalize", dest="normalize", action="store_const", const=False)
    t.add_argument("--washout", type=int)
    t.add_argument("--train-steps", dest="train_steps", type=int, help="use only the first N states")
    t.add_argument("--out")

    pr = sub.add_parser("predict", help="closed-loop prediction from a snapshot")
    common(pr)
    pr.add_argument("--model", help="CCMD snapshot")
    pr.add_argument("--warmup", help="series whose tail seeds the prediction")
    pr.add_argument("--warmup-steps", dest="warmup_steps", type=int)
    pr.add_argument("--steps", type=int)
    pr.add_argument("--truth", help="reference series; enables valid-time scoring")
    pr.add_argument("--theta", type=float)
    pr.add_argument("--lyapunov", type=float, help="largest Lyapunov exponent for horizon units")
    pr.add_argument("--format", choices=("ccts", "csv"))
    pr.add_argument("--out")

    b = sub.add_parser("bench", help="run a benchmark suite or a single experiment")
    common(b)
    b.add_argument("--suite", choices=(*bench.SUITES, "all"))
    b.add_argument("--seed", type=int)
    b.add_argument("--trials", type=int)

    m = sub.add_parser("model", help="snapshot utilities")
    msub = m.add_subparsers(dest="model_command", required=True)
    mi = msub.add_parser("inspect", help="describe a CCMD snapshot")
    mi.add_argument("path")
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "predict": cmd_predict, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    outputs = Outputs()
    try:
        if args.command == "model":
            return cmd_inspect(args.path)
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
        settings = resolve(args.command, args.config, flags)
        code = COMMANDS[args.command](settings, outputs)
        outputs.commit()
        return code
    except (ChaosRCError, OSError) as exc:
        outputs.discard()
        print(f"chaosrc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except BaseException:
        outputs.discard()
        raise


if __name__ == "__main__":
    sys.exit(main())
