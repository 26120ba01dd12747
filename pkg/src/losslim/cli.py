"""Command-line interface.

Exit codes: 0 success, 1 unreadable or malformed input, 2 model-class
violation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import compare_lumped, ensemble_average, network_gains
from .errors import InputError, LosslimError
from .formats import (
    dumps,
    gains_to_csv,
    gains_to_dict,
    is_network_dict,
    network_from_dict,
    read_json,
    statespace_from_dict,
    write_network,
    write_statespace,
    write_text,
)
from .lossless import SQRT2, find_certificate, fundamental_limits
from .netgen import ENSEMBLE_CLUSTER_SIZES, EnsembleConfig, default_roles, generate_network
from .numlin import h2_norm, hinf_norm
from .svg import heatmap
from .swing import harmonic_mean_decomposition, swing_model
from .synth import (
    build_generalized_plant,
    close_loop,
    loop_shift,
    riccati_h2_controller,
    static_hinf_controller,
    structured_h2_controller,
)

log = logging.getLogger("losslim")

CONTROLLERS = ("h2-structured", "hinf-static", "h2-riccati")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class Manifest:
    """Run record written next to the primary output."""

    def __init__(self, command, inputs, seed=None):
        self.command = command
        self.inputs = inputs
        self.seed = seed
        self.timings = {}
        self.outputs = []
        self._t = time.perf_counter()

    def stage(self, name):
        now = time.perf_counter()
        self.timings[name] = round(now - self._t, 6)
        self._t = now

    @property
    def digest(self) -> str:
        blob = json.dumps({"command": self.command, "inputs": self.inputs},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_dict(self) -> dict:
        return {"command": self.command, "config_digest": self.digest, "seed": self.seed,
                "tool_version": __version__, "timings": self.timings,
                "outputs": list(self.outputs)}

    def write(self, path):
        write_text(path, dumps(self.to_dict()))


def _file_digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _emit(args, payload: dict, lines):
    if args.json:
        sys.stdout.write(dumps(payload))
    else:
        for line in lines:
            print(line)


def _load_model(path):
    """State space from a state-space or network file; the network (or None) too."""
    data = read_json(path)
    if is_network_dict(data):
        net = network_from_dict(data)
        return swing_model(net).sys, net
    return statespace_from_dict(data), None


def _fmt(x) -> str:
    return f"{x:.8g}"


# commands --------------------------------------------------------------------

def cmd_certify(args) -> int:
    sys_, _ = _load_model(args.model)
    cert = find_certificate(sys_, tol=args.tol)
    payload = {"certified": True, "n": sys_.n,
               "P": [[float(v) + 0.0 for v in row] for row in cert.P],
               "residual_eq_A": cert.residual_eq_A, "residual_eq_B": cert.residual_eq_B,
               "min_eigenvalue": cert.min_eigenvalue}
    if args.output:
        write_text(args.output, dumps(payload))
    sys.stdout.write(dumps(payload))
    return 0


def cmd_limits(args) -> int:
    sys_, net = _load_model(args.model)
    lim = fundamental_limits(sys_, tol=args.tol)
    payload = {"gamma_h2": lim.gamma_h2, "gamma_hinf": lim.gamma_hinf}
    lines = [f"gamma_h2   = {_fmt(lim.gamma_h2)}",
             "gamma_hinf = " + ("undefined (nonzero D)" if lim.gamma_hinf is None
                                else _fmt(lim.gamma_hinf))]
    if net is not None:
        M = net.inertia_vector()
        dec = harmonic_mean_decomposition(M)
        ids = [b.id for b in net.generators]
        order = np.argsort(-dec["contributions"], kind="stable")
        contrib = [{"bus": ids[k], "inertia": float(M[k]),
                    "contribution": float(dec["contributions"][k])} for k in order]
        payload.update({"n": dec["n"], "harmonic_mean": dec["harmonic_mean"],
                        "gamma_h2_sq_over_n": dec["ratio"], "contributions": contrib})
        lines.append(f"n = {dec['n']}, harmonic mean inertia = {_fmt(dec['harmonic_mean'])}, "
                     f"gamma_h2^2/n = 2/HM = {_fmt(dec['ratio'])}")
        lines.append("per-bus contributions 2/M_k to gamma_h2^2 (largest first):")
        lines += [f"  bus {c['bus']:>4}  M={_fmt(c['inertia']):>12}  2/M={_fmt(c['contribution'])}"
                  for c in contrib]
    _emit(args, payload, lines)
    return 0


def cmd_synthesize(args) -> int:
    sys_, _ = _load_model(args.model)
    lim = fundamental_limits(sys_, tol=args.tol)
    gp = build_generalized_plant(sys_)
    if args.controller == "h2-structured":
        K = structured_h2_controller(sys_)
        achieved, limit, metric = h2_norm(close_loop(gp, K)), lim.gamma_h2, "H2"
    elif args.controller == "hinf-static":
        K = static_hinf_controller(sys_)
        achieved, limit, metric = hinf_norm(close_loop(gp, K), tol=args.tol), SQRT2, "Hinf"
    else:
        shifted = loop_shift(gp) if np.any(sys_.D != 0) else gp
        K = riccati_h2_controller(shifted)
        achieved, limit, metric = h2_norm(close_loop(gp, K)), lim.gamma_h2, "H2"
    if args.output:
        write_statespace(args.output, K.K, kind=K.kind)
    payload = {"controller": args.controller, "metric": metric, "achieved": achieved,
               "limit": limit, "order": K.K.n}
    _emit(args, payload, [f"controller {args.controller} (order {K.K.n})",
                          f"achieved {metric} norm {_fmt(achieved)}",
                          f"limit             {_fmt(limit)}"])
    return 0


def _config_from_args(args, ensemble=False) -> EnsembleConfig:
    data = {}
    if args.config:
        data = read_json(args.config)
        if not isinstance(data, dict):
            raise InputError("config file must hold a JSON object")
    if getattr(args, "clusters", None) is not None:
        data["n_clusters"] = args.clusters
        if "cluster_roles" not in data or len(data["cluster_roles"] or ()) != args.clusters:
            data["cluster_roles"] = list(default_roles(args.clusters))
    if getattr(args, "buses", None) is not None:
        data["total_buses"] = args.buses
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        cfg = EnsembleConfig.from_dict(data)
        if ensemble and cfg.fixed_cluster_sizes is None:
            if cfg.n_clusters != len(ENSEMBLE_CLUSTER_SIZES) or cfg.total_buses != sum(ENSEMBLE_CLUSTER_SIZES):
                raise ValueError("ensembles need fixed_cluster_sizes in the config")
            cfg = replace(cfg, fixed_cluster_sizes=ENSEMBLE_CLUSTER_SIZES)
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, LosslimError):
            raise
        raise InputError(f"bad config: {exc}") from exc
    return cfg


def cmd_gen_network(args) -> int:
    cfg = _config_from_args(args)
    man = Manifest("gen-network", {"config": cfg.to_dict()}, seed=cfg.seed)
    net = generate_network(cfg)
    man.stage("generate")
    n_gen = len(net.generators)
    write_network(args.output, net)
    man.outputs.append(str(args.output))
    man.stage("write")
    man.write(args.manifest or f"{args.output}.manifest.json")
    payload = {"buses": len(net.buses), "generators": n_gen, "lines": len(net.lines),
               "clusters": cfg.n_clusters, "seed": cfg.seed}
    _emit(args, payload, [f"{len(net.buses)} buses ({n_gen} generators), "
                          f"{len(net.lines)} lines, {cfg.n_clusters} clusters, seed {cfg.seed}"])
    return 0


def cmd_gains(args) -> int:
    metric = "H2" if args.metric == "h2" else "Hinf"
    fmt = args.format or _format_from_suffix(args.output)
    extra = {}
    if args.ensemble:
        if args.network:
            raise InputError("--ensemble draws its own networks; pass --config/--seed, not a file")
        if args.lumped:
            raise InputError("--ensemble and --lumped cannot be combined")
        cfg = _config_from_args(args, ensemble=True)
        man = Manifest("gains", {"metric": metric, "ensemble": args.ensemble, "tol": args.tol,
                                 "config": cfg.to_dict()}, seed=cfg.seed)
        res = ensemble_average(cfg, args.ensemble, metric, tol=args.tol, threads=args.threads)
        g = res.gains
        extra = {"seeds": res.seeds, "resampled": res.resampled}
        summary = [f"{metric} ensemble mean over {args.ensemble} networks "
                   f"(seeds {res.seeds[0]}..{res.seeds[-1]}, {res.resampled} resampled)"]
    else:
        if not args.network:
            raise InputError("a network file is required unless --ensemble is given")
        net = network_from_dict(read_json(args.network))
        man = Manifest("gains", {"metric": metric, "lumped": bool(args.lumped), "tol": args.tol,
                                 "network_sha256": _file_digest(args.network)})
        if args.lumped:
            cmp = compare_lumped(net, metric, tol=args.tol, threads=args.threads)
            g = cmp.lumped_gains
            extra = {"limit_full": cmp.limit_full, "limit_lumped": cmp.limit_lumped}
            summary = [f"lumped {metric} gains, {g.n} generator clusters",
                       f"H2 limit full {_fmt(cmp.limit_full)}, lumped {_fmt(cmp.limit_lumped)}"]
        else:
            g = network_gains(net, metric, tol=args.tol, threads=args.threads)
            summary = [f"{metric} gains for {g.n} generator buses"]
    man.stage("compute")
    if fmt == "csv":
        text = gains_to_csv(g)
    elif fmt == "json":
        text = dumps(gains_to_dict(g))
    else:
        text = heatmap(g)
    write_text(args.output, text)
    man.outputs.append(str(args.output))
    if args.svg:
        write_text(args.svg, heatmap(g))
        man.outputs.append(str(args.svg))
    man.stage("write")
    man.write(args.manifest or f"{args.output}.manifest.json")
    diag = np.diag(g.values)
    payload = {"metric": metric, "n": g.n, "output": str(args.output),
               "diagonal_min": float(diag.min()), "diagonal_max": float(diag.max()), **extra}
    summary.append(f"diagonal range [{_fmt(diag.min())}, {_fmt(diag.max())}]; "
                   f"wrote {args.output}")
    _emit(args, payload, summary)
    return 0


def _format_from_suffix(path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    return suffix if suffix in ("csv", "json", "svg") else "csv"


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-6, help="numerical tolerance (default 1e-6)")
    common.add_argument("--json", action="store_true", help="machine-readable stdout")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")

    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--seed", type=int, default=None, help="generator seed")
    gen.add_argument("--config", help="EnsembleConfig JSON file")
    gen.add_argument("--manifest", help="manifest path (default OUTPUT.manifest.json)")

    parser = _Parser(prog="losslim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("certify", parents=[common], help="find the storage certificate P")
    p.add_argument("model", help="state-space or network JSON file")
    p.add_argument("-o", "--output", help="also write the report to this file")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("limits", parents=[common], help="fundamental H2 and H-infinity limits")
    p.add_argument("model", help="state-space or network JSON file")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("synthesize", parents=[common], help="build an optimal controller")
    p.add_argument("model", help="state-space or network JSON file")
    p.add_argument("--controller", choices=CONTROLLERS, default="h2-structured")
    p.add_argument("-o", "--output", help="controller state-space JSON file")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("gen-network", parents=[common, gen], help="generate a random network")
    p.add_argument("--clusters", type=int, help="number of clusters")
    p.add_argument("--buses", type=int, help="total number of buses")
    p.add_argument("-o", "--output", required=True, help="network JSON file")
    p.set_defaults(func=cmd_gen_network)

    p = sub.add_parser("gains", parents=[common, gen], help="per-bus disturbance gain matrix")
    p.add_argument("network", nargs="?", help="network JSON file")
    p.add_argument("--metric", choices=("h2", "hinf"), default="h2")
    p.add_argument("--lumped", action="store_true", help="lump each cluster into one bus")
    p.add_argument("--ensemble", type=int, metavar="N", help="average over N generated networks")
    p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = auto")
    p.add_argument("--format", choices=("csv", "json", "svg"),
                   help="output format (default from the file suffix, else csv)")
    p.add_argument("--svg", help="also write a heatmap here")
    p.add_argument("-o", "--output", required=True, help="gain matrix file")
    p.set_defaults(func=cmd_gains)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 0:
        parser.error("--threads must be nonnegative")
    if getattr(args, "ensemble", None) is not None and args.ensemble < 1:
        parser.error("--ensemble must be positive")
    try:
        return args.func(args)
    except LosslimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
