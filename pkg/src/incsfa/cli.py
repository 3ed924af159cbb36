"""Command line entry point: run named experiments, train, infer and inspect models.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import ccipca as cc
from . import experiments as ex
from . import mca as mc
from . import serialize
from .atomic import write_bytes_atomic, write_text_atomic
from .csvio import iter_frames, write_rows
from .errors import ConfigError, DataError, FormatError, InvalidInputError
from .unit import IncSFAUnit, UnitConfig

OUT_ENV = "INCSFA_OUT"
DEFAULT_OUT = "incsfa-runs"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

log = logging.getLogger("incsfa")


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc


def _dump_json(obj) -> str:
    # schedules may hold r = inf, written as the JSON extension Infinity
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _stamp(unit: IncSFAUnit, provenance: dict) -> bytes:
    unit.provenance = dict(provenance)
    return serialize.dumps(unit)


# -- run -------------------------------------------------------------------


def cmd_run(args) -> int:
    if args.config:
        cfg = ex.ExperimentConfig.from_dict(_load_json(args.config))
        if args.name and args.name != cfg.name:
            raise ConfigError(f"config describes {cfg.name!r}, not {args.name!r}")
        if args.seed is not None:
            cfg.seed = args.seed
    elif args.name:
        cfg = ex.default_config(args.name, 0 if args.seed is None else args.seed)
    else:
        raise ConfigError("give an experiment name or --config")
    out = _out_dir(args.out)
    result = ex.run(cfg)
    h = cfg.config_hash()
    prov = {"experiment": cfg.name, "config_hash": h, "seed": cfg.seed}
    stem = f"{cfg.name}-{h}"
    comments = [f"{k}={v}" for k, v in prov.items()]
    for name, (header, rows) in result.series.items():
        write_rows(out / f"{stem}.{name}.csv", rows, header, comments)
    for name, blob in result.models.items():
        unit = serialize.loads(blob)
        write_bytes_atomic(out / f"{stem}.{name}.isfa", _stamp(unit, prov))
    write_text_atomic(out / f"{stem}.metrics.json", _dump_json(result.metrics))
    print(f"{cfg.name}: wrote {out / stem}.* in {result.runtime_s:.1f}s")
    return EXIT_OK


# -- train / infer ---------------------------------------------------------


def _train_config(d: dict) -> tuple[UnitConfig, int]:
    d = dict(d)
    epochs = d.pop("epochs", 1)
    if not isinstance(epochs, int) or epochs < 1:
        raise ConfigError(f"epochs must be a positive integer, got {epochs!r}")
    if "input_dim" not in d or "J" not in d:
        raise ConfigError("train config needs at least 'input_dim' and 'J'")
    return UnitConfig.from_dict(d), epochs


def cmd_train(args) -> int:
    raw = _load_json(args.config)
    cfg, epochs = _train_config(raw)
    digest = hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16]
    unit = IncSFAUnit(cfg)
    for _ in range(epochs):
        for _, x in iter_frames(args.input, cfg.input_dim):
            unit.update(x)
        unit.begin_episode()
    if unit.t == 0:
        raise DataError(f"{args.input}: no frames")
    blob = _stamp(unit, {"config_hash": digest, "seed": cfg.seed})
    write_bytes_atomic(args.out, blob)
    print(f"trained on {unit.t} frames ({epochs} epochs); model written to {args.out}")
    return EXIT_OK


def _load_model(path) -> IncSFAUnit:
    try:
        return serialize.load(path)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc.strerror or exc}") from exc


def cmd_infer(args) -> int:
    unit = _load_model(args.model)
    dim = unit.config.input_dim

    def rows():
        for lineno, x in iter_frames(args.input):
            if x.shape[0] != dim:
                raise DataError(
                    f"{args.input}:{lineno}: model expects {dim} columns, got {x.shape[0]}"
                )
            yield unit.infer(x)

    comments = [f"{k}={v}" for k, v in sorted(unit.provenance.items())]
    n = write_rows(args.out, rows(), [f"y{j + 1}" for j in range(unit.J)], comments)
    print(f"wrote {n} rows to {args.out}")
    return EXIT_OK


# -- inspect ---------------------------------------------------------------


def summarize(unit: IncSFAUnit) -> str:
    cfg = unit.config
    lines = [
        f"input dim        {cfg.input_dim} (expanded {cfg.expanded_dim})",
        f"whitened dim K   {unit.k}",
        f"slow features J  {unit.J}",
        f"samples seen     {unit.t}",
        f"derivatives seen {unit.n_deriv} over {unit.n_episodes} segment(s)",
    ]
    for k, v in sorted(unit.provenance.items()):
        lines.append(f"{k:<16} {v}")
    lam = cc.sorted_eigenvalues(unit.pcs)
    lines.append("eigenvalues      " + " ".join(f"{v:.6g}" for v in lam))
    lines.append("feature norms    " + " ".join(f"{v:.12f}" for v in unit.sfs.norms()))
    if unit.t >= 2:
        rep = unit.slowness_report()
        lines.append("delta            " + " ".join(f"{v:.6g}" for v in rep.delta))
        lines.append("slowness S       " + " ".join(f"{v:.6g}" for v in rep.S))
    t = max(unit.t, 1)
    lines.append(f"ccipca rate      {cc.amnesic_rate(t, cfg.ccipca):.6g} (t1={cfg.ccipca.t1}, "
                 f"t2={cfg.ccipca.t2}, c={cfg.ccipca.c}, r={cfg.ccipca.r})")
    lines.append(f"mca rate         {mc.mca_rate(unit.t, cfg.mca):.6g} (eta_l={cfg.mca.eta_l}, "
                 f"eta_h={cfg.mca.eta_h}, T={cfg.mca.T})")
    lines.append(f"gamma            {unit.gamma_est.gamma:.6g}")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    print(summarize(_load_model(args.model)))
    return EXIT_OK


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="incsfa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a named experiment")
    r.add_argument("name", nargs="?", choices=sorted(ex.EXPERIMENTS))
    r.add_argument("--config", help="experiment config JSON (overrides the named defaults)")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", help="train a unit on a CSV stream")
    t.add_argument("--config", required=True, help="unit config JSON (plus optional 'epochs')")
    t.add_argument("--input", required=True)
    t.add_argument("--out", required=True, help="model file to write")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="apply a trained model to a CSV stream")
    i.add_argument("--model", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--out", required=True, help="output CSV")
    i.set_defaults(func=cmd_infer)

    s = sub.add_parser("inspect", help="summarize a model file")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, InvalidInputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        # reads are wrapped as data errors above, so this is an output path
        print(f"config error: cannot write {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
