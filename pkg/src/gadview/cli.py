"""Command line pipeline: inject, train, score, eval, run-all, toy.

A run directory accumulates:

    graph/            injected dataset (edges/features/labels .tsv)
    manifest.tsv      what the injection changed
    checkpoint        trained parameters
    loss.log          per-epoch training losses
    scores.tsv        per-node anomaly scores
    roc.tsv           ROC curve of the scores
    config.resolved   flat key=value provenance of every command run

Option precedence: flags > --config file > run_dir/config.resolved >
preset > defaults. Config files are flat `key = value` text whose keys
mirror the run/injection configuration records (the injection seed is
echoed to config.resolved as `inject_seed` to keep the file flat).

Exit codes: 0 success, 2 usage/config error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import threadpoolctl

from .bench import (InjectionConfig, inject_anomalies, make_toy_benchmark,
                    roc_auc, write_manifest, write_roc)
from .graph import DataError, NumericError, load_graph, save_graph
from .model import config_hash, load_checkpoint, save_checkpoint
from .scoring import MODES, read_scores, score_all, write_scores
from .training import RunConfig, train, write_loss_log
from .views import stream

INJECT_STREAM = 7

PRESETS = {
    "cora": {"lr": 1e-3, "epochs": 100},
    "citeseer": {"lr": 1e-3, "epochs": 100},
    "pubmed": {"lr": 1e-3, "epochs": 100},
    "acm": {"lr": 5e-4, "epochs": 400},
}

_RUN_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_INT_KEYS = {"k", "d_hidden", "epochs", "batch_size", "rounds",
             "negative_ratio", "seed", "clique_size", "n_cliques", "n_attr",
             "candidate_pool", "inject_seed"}
_FLOAT_KEYS = {"alpha", "beta", "lr", "restart_prob"}
_STR_KEYS = {"mode", "preset", "dataset"}
_KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | {"scale_after_rounds"}


class ConfigError(ValueError):
    """Bad flags, config file, or option combination."""


def _parse_kv_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _coerce(key: str, value):
    if isinstance(value, str):
        try:
            if key in _INT_KEYS:
                return int(value)
            if key in _FLOAT_KEYS:
                return float(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def _merge_resolved(run_dir: Path, updates: dict) -> None:
    path = run_dir / "config.resolved"
    merged = {}
    if path.is_file():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if "=" in line:
                    k, _, v = line.partition("=")
                    merged[k.strip()] = v.strip()
    for k, v in updates.items():
        merged[k] = repr(float(v)) if isinstance(v, float) else str(v)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for k in sorted(merged):
            fh.write(f"{k} = {merged[k]}\n")


def _resolve_run_config(args, run_dir: Path | None) -> RunConfig:
    values = {}
    preset = getattr(args, "preset", None)
    if preset:
        values.update(PRESETS[preset])
    if run_dir is not None and (run_dir / "config.resolved").is_file():
        prior = _parse_kv_file(run_dir / "config.resolved")
        values.update({k: v for k, v in prior.items() if k in _RUN_FIELDS})
    if getattr(args, "config", None):
        file_vals = _parse_kv_file(Path(args.config))
        values.update({k: v for k, v in file_vals.items() if k in _RUN_FIELDS})
    for field in _RUN_FIELDS:
        flag = getattr(args, field, None)
        if flag is not None:
            values[field] = flag
    values = {k: _coerce(k, v) for k, v in values.items()}
    try:
        cfg = RunConfig(**values)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _resolve_injection(args) -> InjectionConfig:
    values = {}
    if getattr(args, "config", None):
        file_vals = _parse_kv_file(Path(args.config))
        for key in ("clique_size", "n_cliques", "n_attr", "candidate_pool", "seed"):
            if key in file_vals:
                values[key] = _coerce(key, file_vals[key])
    for key, flag in (("clique_size", "clique_size"), ("n_cliques", "cliques"),
                      ("n_attr", "attr"), ("candidate_pool", "pool"),
                      ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    try:
        return InjectionConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_inject(args) -> int:
    dataset = Path(args.dataset)
    if not dataset.is_dir():
        raise ConfigError(f"dataset directory not found: {dataset}")
    cfg = _resolve_injection(args)
    graph = load_graph(dataset)
    injected, manifest = inject_anomalies(graph, cfg, stream(INJECT_STREAM, cfg.seed))
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_graph(injected, run_dir / "graph")
    write_manifest(run_dir / "manifest.tsv", manifest)
    updates = {f"inject_{k}" if k == "seed" else k: v
               for k, v in cfg.to_dict().items()}
    updates["n_attr"] = cfg.attr_count
    updates["dataset"] = str(dataset)
    _merge_resolved(run_dir, updates)
    total = int(injected.labels.sum())
    print(f"injected {cfg.n_cliques} clique(s) of {cfg.clique_size} and "
          f"{cfg.attr_count} feature swap(s): {total} anomalies over "
          f"{injected.n_nodes} nodes")
    return 0


def cmd_train(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "graph").is_dir():
        raise ConfigError(f"no graph/ under {run_dir}; run inject or toy first")
    cfg = _resolve_run_config(args, run_dir)
    graph = load_graph(run_dir / "graph")
    params, history = train(graph, cfg)
    save_checkpoint(run_dir / "checkpoint", params, config_hash(cfg.to_dict()))
    write_loss_log(run_dir / "loss.log", history)
    _merge_resolved(run_dir, cfg.to_dict())
    if history:
        last = history[-1]
        print(f"trained {cfg.epochs} epoch(s); final losses "
              f"gen={last.l_gen:.6f} con={last.l_con:.6f} total={last.l_total:.6f}")
    else:
        print("wrote initialization checkpoint (0 epochs)")
    return 0


def cmd_score(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"run directory not found: {run_dir}")
    ckpt_path = run_dir / "checkpoint"
    if not ckpt_path.is_file():
        raise DataError(f"missing checkpoint under {run_dir}; run train first")
    cfg = _resolve_run_config(args, run_dir)
    graph = load_graph(run_dir / "graph")
    params, _ = load_checkpoint(ckpt_path)
    if params.d_in != graph.n_features or params.d_hidden != cfg.d_hidden:
        raise ConfigError("checkpoint dimensions disagree with graph/config")
    table = score_all(graph, params, cfg, mode=args.mode,
                      scale_per_round=not args.scale_after_rounds)
    write_scores(run_dir / "scores.tsv", table)
    _merge_resolved(run_dir, dict(cfg.to_dict(), mode=args.mode,
                                  scale_after_rounds=args.scale_after_rounds))
    print(f"scored {table.n} nodes over {table.rounds_used} round(s), "
          f"mode {args.mode}")
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "scores.tsv").is_file():
        raise DataError(f"missing scores.tsv under {run_dir}; run score first")
    table = read_scores(run_dir / "scores.tsv")
    labels_path = run_dir / "graph" / "labels.tsv"
    if not labels_path.is_file():
        raise DataError(f"missing {labels_path}")
    graph = load_graph(run_dir / "graph")
    if graph.labels is None or graph.n_nodes != table.n:
        raise DataError("labels absent or misaligned with scores")
    curve = roc_auc(table.final, graph.labels)
    write_roc(run_dir / "roc.tsv", curve)
    print(f"{curve.auc:.4f}")
    return 0


def cmd_run_all(args) -> int:
    out = Path(args.out)
    if args.beta_sweep:
        betas = [float(b) for b in args.beta_sweep.split(",") if b.strip()]
        if not betas:
            raise ConfigError("empty --beta-sweep list")
        results = []
        for beta in betas:
            sub = argparse.Namespace(**vars(args))
            sub.out = str(out / f"beta-{beta:g}")
            sub.run_dir = sub.out
            sub.beta = beta
            sub.beta_sweep = None
            cmd_run_all(sub)
            sub_scores = read_scores(Path(sub.out) / "scores.tsv")
            sub_graph = load_graph(Path(sub.out) / "graph")
            results.append((beta, roc_auc(sub_scores.final, sub_graph.labels).auc))
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.tsv", "w", encoding="utf-8") as fh:
            fh.write("# beta\tauc\n")
            for beta, auc in results:
                fh.write(f"{beta:g}\t{auc!r}\n")
        best_beta, best_auc = max(results, key=lambda r: r[1])
        print(f"best beta {best_beta:g}: AUC {best_auc:.4f}")
        return 0
    args.run_dir = str(out)
    cmd_inject(args)
    cmd_train(args)
    cmd_score(args)
    return cmd_eval(args)


def cmd_toy(args) -> int:
    toy = make_toy_benchmark(args.n, args.seed if args.seed is not None else 0,
                             clique_size=args.clique_size or 5,
                             n_cliques=args.cliques if args.cliques is not None else 1,
                             n_attr=args.attr if args.attr is not None else 5,
                             candidate_pool=args.pool or 10)
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_graph(toy.graph, run_dir / "graph")
    write_manifest(run_dir / "manifest.tsv", toy.manifest)
    total = int(toy.graph.labels.sum())
    print(f"toy benchmark: {toy.graph.n_nodes} nodes, "
          f"{toy.graph.n_edges} edges, {total} anomalies")
    return 0


def _add_run_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="per-dataset learning rate and epoch defaults")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--k", type=int, default=None, help="view size")
    p.add_argument("--d-hidden", dest="d_hidden", type=int, default=None,
                   help="hidden width")
    p.add_argument("--alpha", type=float, default=None,
                   help="contrastive score/loss weight")
    p.add_argument("--beta", type=float, default=None,
                   help="generative score/loss weight")
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None,
                   help="scoring rounds (default 256)")
    p.add_argument("--negative-ratio", dest="negative_ratio", type=int, default=None)
    p.add_argument("--restart-prob", dest="restart_prob", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)


def _add_score_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=MODES, default="full",
                   help="score combination / ablation mode")
    p.add_argument("--scale-after-rounds", action="store_true",
                   help="rescale once after averaging raw scores instead of "
                        "per round")


def _add_inject_flags(p: argparse.ArgumentParser, with_dataset: bool) -> None:
    if with_dataset:
        p.add_argument("--in", dest="dataset", required=True,
                       help="dataset directory to read")
        p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--clique-size", dest="clique_size", type=int, default=None)
    p.add_argument("--cliques", type=int, default=None,
                   help="number of planted cliques")
    p.add_argument("--attr", type=int, default=None,
                   help="number of feature swaps (default: cliques*clique_size)")
    p.add_argument("--pool", type=int, default=None,
                   help="candidate pool size for feature swaps")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="gadview",
        description="unsupervised graph anomaly detection from "
                    "self-supervised contextual views")
    top.add_argument("--threads", type=int, default=0,
                     help="cap BLAS parallelism (0 = library default)")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="plant synthetic anomalies")
    _add_inject_flags(p, with_dataset=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("train", help="train a detector on run_dir/graph")
    p.add_argument("run_dir")
    _add_run_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="write per-node anomaly scores")
    p.add_argument("run_dir")
    _add_run_config_flags(p)
    _add_score_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="print ROC-AUC of scores vs labels")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run-all", help="inject + train + score + eval")
    _add_inject_flags(p, with_dataset=True)
    _add_run_config_flags(p)
    _add_score_flags(p)
    p.add_argument("--beta-sweep", default=None, metavar="B1,B2,...",
                   help="run the pipeline once per beta and report the best AUC")
    p.set_defaults(func=cmd_run_all)

    p = sub.add_parser("toy", help="write a small planted-anomaly benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_inject_flags(p, with_dataset=False)
    p.set_defaults(func=cmd_toy)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads and args.threads > 0:
            threadpoolctl.threadpool_limits(limits=args.threads)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
