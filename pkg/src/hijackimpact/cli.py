"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 internal error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile
from collections.abc import Sequence

import numpy as np

from . import __version__, theory
from .bgpsim import HijackScenario, PrefixMode, batch_simulate, propagate_single_origin, random_scenarios
from .estimators import (
    DEFAULT_ALPHA,
    FeatureKind,
    FeatureLreModel,
    LreModel,
    compute_f_dist,
    compute_f_pref,
    fit_feature_lre,
    fit_lre,
    nie,
    predict_feature_lre,
    predict_lre,
)
from .evalkit import (
    evaluate,
    make_records,
    read_dataset,
    run_lre_experiment,
    run_nie_experiment,
    write_dataset,
    write_reports_csv,
)
from .ingest import (
    EventSpec,
    build_ping_targets,
    classify_bgp_paths,
    classify_traceroutes,
    merge_pfx2as_snapshots,
    parse_pfx2as,
    read_path_records,
    read_traceroute_records,
)
from .monitors import (
    DEFAULT_FAILURE_TABLE,
    MeasurementVector,
    MonitorSet,
    PingModel,
    load_monitor_set,
    sample_clustered_monitors,
    sample_random_monitors,
)
from .topology import AsGraph, gen_synthetic_topology, load_as_rel

log = logging.getLogger("hijackimpact")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------- shared helpers


def _add_topology_args(p):
    g = p.add_argument_group("topology")
    g.add_argument("--topology", help="AS-relationship file (serial-1, optionally .gz)")
    g.add_argument("--synthetic", type=int, metavar="N", help="use a synthetic topology with N ASes instead")
    g.add_argument("--topology-seed", type=int, default=0, help="seed of the synthetic topology (default 0)")


def _load_graph(args) -> AsGraph:
    if args.topology and args.synthetic:
        raise UsageError("--topology and --synthetic are mutually exclusive")
    if args.topology:
        return load_as_rel(args.topology)
    if args.synthetic:
        return gen_synthetic_topology(args.synthetic, args.topology_seed)
    raise UsageError("one of --topology or --synthetic is required")


def _require_seed(args):
    if args.seed is None:
        raise UsageError("--seed is required (no implicit seeds)")


@contextlib.contextmanager
def _atomic_output(path: str | None):
    """Yield a text handle; the target file only appears if the body succeeds."""
    if path is None or path == "-":
        yield sys.stdout
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _read_records(path: str):
    with open(path, encoding="utf-8") as fh:
        records = read_dataset(fh)
    if not records:
        raise ValueError(f"{path}: empty dataset")
    return records


def _monitor_sets(args, graph: AsGraph) -> dict[str, MonitorSet]:
    sets: dict[str, MonitorSet] = {}
    for item in args.monitors or []:
        if "=" not in item:
            raise UsageError(f"--monitors expects LABEL=FILE, got {item!r}")
        label, path = item.split("=", 1)
        ms = load_monitor_set(_read_text(path), label)
        if ms.duplicates:
            log.warning("%s: %d duplicate monitor lines ignored", path, ms.duplicates)
        ms.indices(graph)
        sets[label] = ms
    if args.random_monitors:
        sets["random"] = sample_random_monitors(graph, args.random_monitors, [args.seed, 1])
    if args.clustered_monitors:
        sets["clustered"] = sample_clustered_monitors(graph, args.clustered_monitors, [args.seed, 2])
    return sets


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args) -> None:
    _require_seed(args)
    graph = _load_graph(args)
    victims = load_monitor_set(_read_text(args.victims), "victims").members if args.victims else None
    hijackers = load_monitor_set(_read_text(args.hijackers), "hijackers").members if args.hijackers else None
    scenarios = random_scenarios(
        graph, args.n, args.seed, args.type, PrefixMode(args.prefix_mode), victims, hijackers, args.symmetric
    )
    outcomes = batch_simulate(graph, scenarios, jobs=args.jobs)
    records = make_records(outcomes, _monitor_sets(args, graph))
    with _atomic_output(args.out) as fh:
        if args.decisions:
            for rec, oc in zip(records, outcomes):
                d = rec.to_dict()
                d["decisions"] = oc.to_record(include_decisions=True)["decisions"]
                fh.write(json.dumps(d, separators=(",", ":")) + "\n")
        else:
            write_dataset(records, fh)


def cmd_eval(args) -> None:
    if args.dataset:
        records = _read_records(args.dataset)
        truth = np.array([r.impact for r in records])
        reports = []
        labels = sorted({lbl for r in records for lbl in r.monitor_sets})
        model = LreModel.from_json(_read_text(args.lre_model)) if args.lre_model else None
        for label in labels:
            rows = [r for r in records if label in r.monitor_sets]
            if len(rows) != len(records):
                raise ValueError(f"monitor set {label!r} missing from some records")
            X = np.array([r.monitor_sets[label].m for r in rows], dtype=np.float64)
            reports.append(evaluate(X.mean(axis=1), truth, "nie", label, X.shape[1]))
            if model is not None and tuple(model.monitor_asns.tolist()) == rows[0].monitor_sets[label].asns:
                reports.append(evaluate(np.clip(X @ model.weights, 0, 1), truth, "lre", label, X.shape[1]))
        with _atomic_output(args.out) as fh:
            write_reports_csv(reports, fh)
        return

    _require_seed(args)
    graph = _load_graph(args)
    source = args.monitor_source
    if args.monitor_file:
        source = load_monitor_set(_read_text(args.monitor_file), os.path.basename(args.monitor_file))
    if args.experiment == "lre":
        rows = run_lre_experiment(
            graph, args.n_train, args.n_test, source, args.alpha, args.m_grid, args.seed,
            hijack_type=args.type, leave_pair_out=args.leave_pair_out, jobs=args.jobs,
        )
        reports = [r for row in rows for r in (row.lre, row.nie)]
    else:
        ping = PingModel(n_ip=args.n_ip, seed=args.seed) if args.n_ip else None
        reports = run_nie_experiment(
            graph, args.n, args.type, source, args.m_grid, args.seed, ping=ping, jobs=args.jobs, draws=args.draws
        )
    with _atomic_output(args.out) as fh:
        write_reports_csv(reports, fh)


def _impact_samples(args) -> np.ndarray:
    if args.impacts:
        text = _read_text(args.impacts)
        if text.lstrip().startswith("{"):
            return np.array([r.impact for r in read_dataset(text.splitlines())])
        return np.array([float(x) for x in text.split()])
    if args.uniform:
        _require_seed(args)
        return np.random.default_rng(args.seed).random(args.uniform)
    raise UsageError("one of --impacts or --uniform is required")


def cmd_theory(args) -> None:
    samples = theory.ImpactSamples(_impact_samples(args))
    p_values = list(args.p_grid or [])
    for n_ip in args.n_ip or []:
        p_values.append(PingModel(n_ip=n_ip).p)
    with _atomic_output(args.out) as fh:
        theory.write_curves(fh, samples, args.m_grid, p_values or [0.0])


def _feature_rows(records, graph, label, kind):
    out = []
    for r in records:
        sc = r.scenario
        rv = propagate_single_origin(graph, sc.victim, sc.seed)
        rh = propagate_single_origin(graph, sc.hijacker, sc.seed)
        ob = r.monitor_sets[label]
        ms = MonitorSet(label, ob.asns)
        f = (compute_f_dist if kind == FeatureKind.DIST else compute_f_pref)(rv, rh, ms)
        out.append((float(np.mean(ob.m)), f, r.impact))
    return out


def cmd_fit_lre(args) -> None:
    records = _read_records(args.dataset)
    label = args.monitor_set
    if any(label not in r.monitor_sets for r in records):
        raise ValueError(f"monitor set {label!r} missing from some records")
    if args.feature:
        graph = _load_graph(args)
        model = fit_feature_lre(_feature_rows(records, graph, label, FeatureKind(args.feature)), args.feature)
        text = model.to_json()
    else:
        asns = records[0].monitor_sets[label].asns
        if any(r.monitor_sets[label].asns != asns for r in records):
            raise ValueError(f"monitor set {label!r} differs between records")
        X = np.array([r.monitor_sets[label].m for r in records], dtype=np.float64)
        y = np.array([r.impact for r in records])
        text = fit_lre(X, y, args.alpha, asns).to_json()
    with _atomic_output(args.out) as fh:
        fh.write(text + "\n")


def cmd_predict(args) -> None:
    raw = json.loads(_read_text(args.model))
    lines = [ln for ln in _read_text(args.measurements).splitlines() if ln.strip()]
    with _atomic_output(args.out) as fh:
        for ln in lines:
            d = json.loads(ln)
            mv = MeasurementVector.from_dict(d)
            if "kind" in raw:
                model = FeatureLreModel.from_json(json.dumps(raw))
                if "f" not in d:
                    raise ValueError("feature LRE needs an 'f' field per measurement line")
                est = predict_feature_lre(model, nie(mv).value, float(d["f"]))
            else:
                est = predict_lre(LreModel.from_json(json.dumps(raw)), mv)
            fh.write(json.dumps({"estimate": est.value, "estimator": est.estimator, "clamped": est.clamped}) + "\n")


def cmd_ping_targets(args) -> None:
    maps = [parse_pfx2as(_read_text(p)) for p in args.pfx2as]
    pm = maps[0] if len(maps) == 1 else merge_pfx2as_snapshots(maps, args.min_consistency)
    with open(args.hitlist, encoding="utf-8") as fh:
        tl = build_ping_targets(fh, pm, args.min_score, args.cap)
    if tl.malformed:
        log.warning("%d malformed hitlist lines skipped", tl.malformed)
    log.info("%d ASes without qualifying targets, %d unmapped IPs", tl.ases_without_targets, tl.unmapped)
    with _atomic_output(args.out) as out:
        json.dump(tl.to_dict(), out, indent=1)
        out.write("\n")


def cmd_classify(args) -> None:
    event = EventSpec(args.victim, args.hijacker, args.prefix, args.victim_upstreams or (), args.hijacker_upstreams or ())
    text = _read_text(args.records)
    if args.kind == "bgp":
        mv, diag = classify_bgp_paths(read_path_records(text), event, origin_only=args.origin_only)
    else:
        if not args.pfx2as:
            raise UsageError("traceroute classification needs --pfx2as")
        pm = parse_pfx2as(_read_text(args.pfx2as))
        mv, diag = classify_traceroutes(read_traceroute_records(text), event, pm)
    for mon, why in diag.no_inference:
        log.info("AS%d: no inference (%s)", mon, why)
    for k, msg in diag.errors:
        log.warning("record %d: %s", k, msg)
    with _atomic_output(args.out) as fh:
        fh.write(json.dumps(mv.to_dict()) + "\n")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hijackimpact", description="Simulate BGP hijacks and estimate their impact.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file of option values; command-line flags take precedence")
        sp.add_argument("--out", "-o", help="output file (default: stdout)")

    s = sub.add_parser("simulate", help="simulate hijack scenarios and write a JSONL dataset")
    common(s)
    _add_topology_args(s)
    s.add_argument("--seed", type=int, help="scenario seed (required)")
    s.add_argument("-n", type=int, default=1000, help="number of scenarios (default 1000)")
    s.add_argument("--type", type=int, default=0, help="hijack type N (default 0)")
    s.add_argument("--prefix-mode", choices=[m.value for m in PrefixMode], default="exact", help="hijack the exact prefix or a more-specific one")
    s.add_argument("--symmetric", action="store_true", help="follow every {V,H} with {H,V}")
    s.add_argument("--victims", help="file of candidate victim ASNs")
    s.add_argument("--hijackers", help="file of candidate hijacker ASNs")
    s.add_argument("--monitors", action="append", metavar="LABEL=FILE", help="monitor list to observe (repeatable)")
    s.add_argument("--random-monitors", type=int, metavar="M", help="also observe M random monitors")
    s.add_argument("--clustered-monitors", type=int, metavar="M", help="also observe M clustered monitors")
    s.add_argument("--decisions", action="store_true", help="include every AS's decision in each record")
    s.add_argument("--jobs", type=int, default=1, help="parallel workers (output does not depend on it)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval", help="evaluate estimators on a dataset or run an experiment")
    common(e)
    _add_topology_args(e)
    e.add_argument("--dataset", help="JSONL dataset: evaluate NIE (and --lre-model) per monitor set")
    e.add_argument("--lre-model", help="LRE model JSON to evaluate alongside NIE")
    e.add_argument("--experiment", choices=["nie", "lre"], default="nie", help="experiment when no --dataset")
    e.add_argument("--seed", type=int, help="experiment seed (required without --dataset)")
    e.add_argument("-n", type=int, default=1000, help="scenarios for the NIE experiment")
    e.add_argument("--n-train", type=int, default=1000, help="training scenarios for the LRE experiment")
    e.add_argument("--n-test", type=int, default=1000, help="test scenarios for the LRE experiment")
    e.add_argument("--type", type=int, default=0, help="hijack type N (default 0)")
    e.add_argument("--monitor-source", choices=["random", "clustered"], default="random", help="how monitors are placed")
    e.add_argument("--monitor-file", help="draw monitors from this list instead")
    e.add_argument("--m-grid", type=_int_list, default=[10, 100, 1000], help="comma-separated M values")
    e.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="ridge penalty of the LRE fit")
    e.add_argument("--n-ip", type=int, help="ping failures for n_ip IPs per AS (default table)")
    e.add_argument("--draws", type=int, default=16, help="random monitor draws per scenario")
    e.add_argument("--leave-pair-out", action="store_true", help="never train on the tested {V,H} pair")
    e.add_argument("--jobs", type=int, default=1, help="parallel workers (output does not depend on it)")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("theory", help="CSV of theoretical bias/RMSE curves")
    common(t)
    t.add_argument("--impacts", help="dataset JSONL or whitespace-separated impact values")
    t.add_argument("--uniform", type=int, metavar="K", help="use K uniform impact samples")
    t.add_argument("--seed", type=int, help="seed for --uniform")
    t.add_argument("--m-grid", type=_int_list, default=[10, 20, 50, 100, 200, 500, 1000], help="comma-separated M values")
    t.add_argument("--p-grid", type=_float_list, help="failure probabilities")
    t.add_argument("--n-ip", type=_int_list, help=f"IPs per AS, mapped through {DEFAULT_FAILURE_TABLE}")
    t.set_defaults(func=cmd_theory)

    f = sub.add_parser("fit-lre", help="fit a ridge or feature LRE model from a dataset")
    common(f)
    _add_topology_args(f)
    f.add_argument("--dataset", required=True, help="JSONL training dataset")
    f.add_argument("--monitor-set", required=True, help="label of the monitor set in the dataset")
    f.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="ridge penalty")
    f.add_argument("--feature", choices=[k.value for k in FeatureKind], help="fit the 3-weight feature model")
    f.set_defaults(func=cmd_fit_lre)

    pr = sub.add_parser("predict", help="apply a fitted model to measurement vectors")
    common(pr)
    pr.add_argument("--model", required=True, help="model JSON from fit-lre")
    pr.add_argument("--measurements", required=True, help="JSONL of measurement vectors")
    pr.set_defaults(func=cmd_predict)

    pt = sub.add_parser("ping-targets", help="compile per-AS ping targets from a hitlist")
    common(pt)
    pt.add_argument("--hitlist", required=True, help="lines of '<ip> <score>'")
    pt.add_argument("--pfx2as", action="append", required=True, help="prefix-to-AS snapshot (repeatable)")
    pt.add_argument("--min-score", type=float, default=0.9, help="lowest accepted score (default 0.9)")
    pt.add_argument("--cap", type=int, default=10, help="targets kept per AS (default 10)")
    pt.add_argument("--min-consistency", type=float, default=0.5, help="share of snapshots a mapping must exceed")
    pt.set_defaults(func=cmd_ping_targets)

    c = sub.add_parser("classify", help="classify BGP paths or traceroutes for one event")
    common(c)
    c.add_argument("--kind", choices=["bgp", "traceroute"], required=True, help="record type")
    c.add_argument("--records", required=True, help="JSONL records")
    c.add_argument("--victim", type=int, required=True, help="victim ASN")
    c.add_argument("--hijacker", type=int, required=True, help="hijacker ASN")
    c.add_argument("--prefix", help="hijacked prefix (traceroutes)")
    c.add_argument("--victim-upstreams", type=_int_list, help="comma-separated upstream ASNs of the victim site")
    c.add_argument("--hijacker-upstreams", type=_int_list, help="comma-separated upstream ASNs of the hijacker site")
    c.add_argument("--pfx2as", help="prefix-to-AS file for resolving traceroute hops")
    c.add_argument("--origin-only", action="store_true", help="BGP: only check the origin AS")
    c.set_defaults(func=cmd_classify)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str], args):
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(_read_text(args.config))
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{args.config}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ValueError(f"{args.config}: top level must be an object")
    sp = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sp._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(k for k in cfg if k not in known or k in ("help", "config"))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    sp.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s", stream=sys.stderr
    )
    try:
        args = _apply_config(parser, argv, args)
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"hijackimpact: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        print(f"hijackimpact: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"hijackimpact: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
