"""Command-line front end.

Every subcommand reads an optional TOML config (``--config``), applies
``--set key=value`` overrides and then explicit flags (flags win).  The
effective config is echoed into each output artifact.  Exit codes: 0 success,
1 runtime error, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any

import tomli

from . import diagnostics as diag
from . import exact, montecarlo, urn
from .weights import (
    WeightSequence,
    is_non_decreasing,
    satisfies_srh,
    tail_inverse_square_sum,
)

SUBCOMMANDS = ("simulate", "exact", "diagnose", "mc", "sweep", "check-constants")

DEFAULTS: dict[str, Any] = {
    "weights": {"kind": "polynomial", "rho": 2.0},
    "d": 1,
    "ticks": 1000,
    "seed": 0,
    "coarse": False,
    "n": 2,
    "arithmetic": "rational",
    "method": "coarse",
    "runs": 100,
    "window": None,
    "diagnostics": False,
    "tolerance": 1e-12,
    "grid": False,
    "sweep": {},
}

# flag name -> dotted config key
_FLAG_KEYS = {
    "kind": "weights.kind",
    "rho": "weights.rho",
    "c": "weights.c",
    "values": "weights.values",
    "tail": "weights.tail",
    "d": "d",
    "ticks": "ticks",
    "seed": "seed",
    "n": "n",
    "arithmetic": "arithmetic",
    "method": "method",
    "runs": "runs",
    "window": "window",
    "s_inf": "s_inf",
}


class ConfigError(Exception):
    pass


def _parse_value(text: str) -> Any:
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _set_dotted(cfg: dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {p!r} is not a section")
    node[parts[-1]] = value


def effective_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = json.loads(json.dumps(DEFAULTS))
    base_dir = None
    if args.config:
        path = Path(args.config)
        try:
            loaded = tomli.loads(path.read_text())
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base_dir = path.parent
        if "weights" in loaded:
            cfg["weights"] = {}
        for k, v in loaded.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict):
                cfg[k].update(v)
            else:
                cfg[k] = v
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        if key.strip() == "weights.kind":
            cfg["weights"] = {}
        _set_dotted(cfg, key.strip(), _parse_value(text.strip()))
    flags = {f: getattr(args, f, None) for f in _FLAG_KEYS}
    if flags["kind"] is not None:
        cfg["weights"] = {}
    for flag, key in _FLAG_KEYS.items():
        value = flags[flag]
        if value is None:
            continue
        if flag == "values":
            value = [float(v) for v in value.split(",")] if "," in value or _is_number(value) else value
        _set_dotted(cfg, key, value)
    for flag in ("coarse", "diagnostics", "grid"):
        if getattr(args, flag, False):
            cfg[flag] = True
    if base_dir is not None and isinstance(cfg["weights"].get("values"), str):
        cfg["weights"]["values"] = str(base_dir / cfg["weights"]["values"])
    return cfg


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _weights(cfg: dict[str, Any]) -> WeightSequence:
    w = dict(cfg["weights"])
    if w.get("kind") == "counterexample":
        w.setdefault("d", cfg["d"])
    try:
        return WeightSequence.from_dict(w)
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"bad weights {w}: {exc}") from exc


def _int(cfg: dict[str, Any], key: str, minimum: int = 0) -> int:
    v = cfg.get(key)
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {v!r}")
    return v


def _provenance(cfg: dict[str, Any]) -> list[str]:
    return [f"config: {json.dumps(cfg, sort_keys=True)}"]


def _open_out(path: str | None):
    return open(path, "w", newline="") if path else _Stdout()


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        return False


def _summary(args: argparse.Namespace, line: str) -> None:
    # CSV may already occupy stdout
    stream = sys.stderr if getattr(args, "out", None) is None and args.command not in ("check-constants",) else sys.stdout
    print(line, file=stream)


# subcommands -------------------------------------------------------------------


def cmd_simulate(args, cfg):
    seq, d = _weights(cfg), _int(cfg, "d", 1)
    ticks, seed = _int(cfg, "ticks"), _int(cfg, "seed")
    rng = urn.as_generator(seed)

    def run():
        if cfg["coarse"]:
            if ticks % d:
                raise ConfigError(f"coarse simulation needs ticks ({ticks}) to be a multiple of d ({d})")
            return urn.simulate_coarse(seq, d, ticks // d, rng)
        return urn.simulate_fine(seq, d, ticks, rng)

    path = run()
    with _open_out(args.out) as fh:
        urn.write_path_csv(path, fh, _provenance(cfg))
    last = path.state(len(path) - 1)
    _summary(args, f"simulate: {seq} d={d} {'coarse steps' if cfg['coarse'] else 'ticks'}={len(path) - 1} final=({last.r},{last.g})")


def cmd_exact(args, cfg):
    seq, d, n = _weights(cfg), _int(cfg, "d", 1), _int(cfg, "n")
    arith, method = cfg["arithmetic"], cfg["method"]
    if arith not in ("rational", "float"):
        raise ConfigError("arithmetic must be 'rational' or 'float'")
    if method not in ("coarse", "fine"):
        raise ConfigError("method must be 'coarse' or 'fine'")
    if arith == "rational" and not seq.supports_exact:
        raise ConfigError(f"{seq} has irrational weights; use --arithmetic float")
    if method == "fine" and d * n > exact.MAX_ENUMERATION_TICKS:
        raise ConfigError(f"fine enumeration needs d*n <= {exact.MAX_ENUMERATION_TICKS}")
    fn = exact.coarse_distribution if method == "coarse" else exact.enumerate_fine_paths
    dist = fn(seq, d, n, arith)
    with _open_out(args.out) as fh:
        dist.to_csv(fh, _provenance(cfg))
    _summary(args, f"exact: {seq} d={d} n={n} method={method} states={len(dist.entries)} total={dist.total()}")


def cmd_diagnose(args, cfg):
    seq, d = _weights(cfg), _int(cfg, "d", 1)
    ticks, seed = _int(cfg, "ticks"), _int(cfg, "seed")
    path = urn.simulate_fine(seq, d, ticks, urn.as_generator(seed))
    tr = diag.trace(path, seq, float(cfg["tolerance"]))
    with _open_out(args.out) as fh:
        tr.to_csv(fh, _provenance(cfg))
    gap = float(abs(tr.N - diag.compute_N_closed_form(path, seq)).max())
    parts = [f"diagnose: {seq} d={d} ticks={ticks}", f"N_final={tr.N[-1]:.6g}", f"N_closed_form_gap={gap:.3g}"]
    if is_non_decreasing(seq):
        ok, worst = diag.coupling_sweep(tr, seq)
        parts.append(f"coupling={'ok' if ok else 'VIOLATED'} worst_ratio={worst:.3g}")
    if ticks >= 1:
        window = min(diag.default_window(d, ticks), ticks)
        fx = diag.fixation_detector(path, window)
        parts.append(f"fixated={fx.fixated}")
    _summary(args, " ".join(parts))


def _experiment(cfg: dict[str, Any]) -> montecarlo.ExperimentConfig:
    try:
        return montecarlo.ExperimentConfig(
            weights=_weights(cfg),
            d=_int(cfg, "d", 1),
            horizon_ticks=_int(cfg, "ticks", 1),
            runs=_int(cfg, "runs", 1),
            master_seed=_int(cfg, "seed"),
            fixation_window=None if cfg.get("window") is None else _int(cfg, "window", 1),
            diagnostics=bool(cfg["diagnostics"]),
        )
    except montecarlo.ConfigError as exc:
        raise ConfigError(str(exc)) from exc


def _json_csv_targets(out: str | None, stem: str) -> tuple[Path, Path]:
    base = Path(out) if out else Path(stem)
    if base.suffix in (".json", ".csv"):
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(".csv")


def cmd_mc(args, cfg):
    exp = _experiment(cfg)
    result = montecarlo.run_batch(exp, threads=args.threads)
    doc = result.to_dict()
    doc["effective_config"] = cfg
    js, cs = _json_csv_targets(args.out, "mc_results")
    js.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    result.write_csv(cs)
    agg = result.aggregate()
    print(
        f"mc: {exp.weights} d={exp.d} runs={exp.runs} horizon={exp.horizon_ticks} window={exp.window} "
        f"fixation={agg['fixation_frequency']:.4f} wilson95=[{agg['wilson95_lo']:.4f},{agg['wilson95_hi']:.4f}] "
        f"-> {js}"
    )


def cmd_sweep(args, cfg):
    exp = _experiment(cfg)
    axes = cfg.get("sweep") or {}
    if isinstance(axes, dict) and "axes" in axes:
        axes = axes["axes"]
    for a in args.axis or []:
        if "=" not in a:
            raise ConfigError(f"axis {a!r} is not name=v1,v2,...")
        name, vals = a.split("=", 1)
        axes[name.strip()] = [_parse_value(v.strip()) for v in vals.split(",")]
    try:
        montecarlo.grid_points(axes)
    except montecarlo.ConfigError as exc:
        raise ConfigError(str(exc)) from exc
    rows = montecarlo.sweep(exp, axes, threads=args.threads)
    js, cs = _json_csv_targets(args.out, "sweep_results")
    doc = json.loads(montecarlo.sweep_to_json(rows, exp, axes))
    doc["effective_config"] = cfg
    js.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    montecarlo.write_sweep_csv(rows, cs)
    failed = sum(r.error is not None for r in rows)
    print(f"sweep: {len(rows)} points ({failed} failed) -> {js}")


GRID_D = tuple(range(1, 11))
GRID_S = (0.1, 1.0, 10.0, 100.0)


def constants_grid() -> list[tuple[int, float, float, float, bool]]:
    rows = []
    for d in GRID_D:
        for s in GRID_S:
            a = exact.alpha_constant(d, s)
            ratio, ok = exact.lemma_bound_holds(d, s)
            rows.append((d, s, a, ratio, ok))
    return rows


def cmd_check_constants(args, cfg):
    d = _int(cfg, "d", 1)
    lines = []
    all_ok = True
    if cfg["grid"]:
        lines.append("d,s_inf,alpha,ratio,ratio>=1/12")
        for d_, s, a, ratio, ok in constants_grid():
            all_ok &= ok
            lines.append(f"{d_},{s:g},{a:.6e},{ratio:.6f},{'PASS' if ok else 'FAIL'}")
        summary = f"check-constants grid {len(GRID_D)}x{len(GRID_S)}: {'PASS' if all_ok else 'FAIL'}"
    else:
        seq = _weights(cfg)
        srh = satisfies_srh(seq)
        lines.append(f"weights: {seq}")
        lines.append(f"SRH (sum 1/w_i): {srh.status}" + (f", s_inf = {srh.value:.12g}" if srh.converged else ""))
        sq = tail_inverse_square_sum(seq, 0)
        lines.append(f"sum 1/w_i^2: {sq.status}" + (f" = {sq.value:.12g}" if sq.converged else ""))
        lines.append(f"non-decreasing: {is_non_decreasing(seq)}")
        s_inf = cfg.get("s_inf")
        if s_inf is None and srh.converged:
            s_inf = srh.value
        if s_inf is None:
            lines.append("alpha: n/a (SRH fails and no --s-inf given)")
            summary = f"check-constants: {seq} d={d} SRH {srh.status}; alpha n/a"
        else:
            s_inf = float(s_inf)
            if not 0 < s_inf < math.inf:
                raise ConfigError("s_inf must be positive and finite")
            a = exact.alpha_constant(d, s_inf)
            ratio, ok = exact.lemma_bound_holds(d, s_inf)
            all_ok = ok
            lines.append(f"alpha = (24+16*{d}*{s_inf:.12g})^-2 = {a:.6e}")
            lines.append(f"escape ratio = {ratio:.6f} (>= 1/12: {'PASS' if ok else 'FAIL'})")
            summary = (
                f"check-constants: {seq} d={d} SRH {srh.status} alpha={a:.4e} ratio={ratio:.4f} "
                f">=1/12: {'PASS' if ok else 'FAIL'}"
            )
    lines.insert(0, f"# config: {json.dumps(cfg, sort_keys=True)}")
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    else:
        print("\n".join(lines[1:]), file=sys.stderr)
    print(summary)
    return 0 if all_ok else 1


HANDLERS = {
    "simulate": cmd_simulate,
    "exact": cmd_exact,
    "diagnose": cmd_diagnose,
    "mc": cmd_mc,
    "sweep": cmd_sweep,
    "check-constants": cmd_check_constants,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urnfix", description="Reinforced d-ball urn toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output file (or stem for mc/sweep)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
        p.add_argument("--kind", choices=("constant", "polynomial", "exponential", "counterexample", "table"))
        p.add_argument("--rho", type=float)
        p.add_argument("--c", type=float)
        p.add_argument("--values", help="comma-separated table values or a file path")
        p.add_argument("--tail", choices=("repeat-last", "extend-polynomial", "extend-exponential"))
        p.add_argument("--d", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=1)
        if name in ("simulate", "diagnose", "mc", "sweep"):
            p.add_argument("--ticks", type=_int_expr)
        if name == "simulate":
            p.add_argument("--coarse", action="store_true", help="coarse chain; ticks must be a multiple of d")
        if name == "exact":
            p.add_argument("--n", type=int, help="horizon in coarse steps")
            p.add_argument("--arithmetic", choices=("rational", "float"))
            p.add_argument("--method", choices=("coarse", "fine"))
        if name in ("mc", "sweep"):
            p.add_argument("--runs", type=int)
            p.add_argument("--window", type=int, help="fixation window (trailing ticks)")
            p.add_argument("--diagnostics", action="store_true")
        if name == "sweep":
            p.add_argument("--axis", action="append", metavar="NAME=V1,V2", help="sweep axis (repeatable)")
        if name == "check-constants":
            p.add_argument("--s-inf", dest="s_inf", type=float)
            p.add_argument("--grid", action="store_true", help="check d=1..10 x s_inf in {0.1,1,10,100}")
    return parser


def _int_expr(text: str) -> int:
    """Integer flag accepting ``10^6`` and ``1e6`` forms."""
    t = text.strip()
    if "^" in t:
        base, exp_ = t.split("^", 1)
        return int(base) ** int(exp_)
    value = float(t) if any(ch in t for ch in ".eE") else int(t)
    if isinstance(value, float):
        if not value.is_integer():
            raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
        value = int(value)
    return value


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = effective_config(args)
        _weights(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        rc = HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - mapped to exit code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
