"""Command-line pipeline: ingest -> annotate -> traits -> discover ->
counterfactual databases -> reward -> policy -> evaluation curves.

Every artifact is stamped with the hash of the resolved configuration plus
its input hashes; reruns skip stages whose stamps match, and a full rerun
with the same config and seed reproduces every byte.  Exit codes: 0 ok,
2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import glob as globmod
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import cfengine, grasp, personality, policy, retrieval, reward, strategy, synthworld
from .corpus import ROLE_EE, ROLE_ER, Corpus, load_corpus, save_corpus, split, to_transitions
from .errors import ConfigError, DataError, NumericError
from .numcore import TrainConfig, regression_metrics

DEFAULT_CONFIG = {
    "corpus": None,
    "outdir": "bundle",
    "seed": 0,
    "workers": 1,
    "train_fraction": 0.8,
    "n_databases": 50,
    "run_policy": True,
    "bootstrap": 0,
    "variant": {"engine": "scm", "actions": "causal", "latent": True},
    "strategy": {"learning_rate": 0.05, "batch_size": 64, "epochs": 120},
    "tp3m": {"hidden": [1024, 256], "learning_rate": 1e-4, "batch_size": 64, "epochs": 100},
    "grasp": {"depth": 3, "tier": 2, "penalty_c": 2.0, "restarts": 5},
    "ddp": {"ridge": 1e-3},
    "policy": {
        "gamma": 0.9,
        "batch_size": 60,
        "learning_rate": 1e-3,
        "target_sync": 100,
        "updates": 2000,
        "hidden": 256,
    },
    "scm_hidden": [],
    "kqr_pca_dim": 16,
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown config key {k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v)
        else:
            out[k] = v
    return out


def resolve_config(path: str | None, seed: int | None = None, workers: int | None = None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON ({exc.msg})") from None
        cfg = _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = seed
    if workers is not None:
        cfg["workers"] = workers
    elif os.environ.get("CFPERSUADE_WORKERS"):
        cfg["workers"] = int(os.environ["CFPERSUADE_WORKERS"])
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


class Stage:
    """Restartable pipeline stage: skipped when its stamp matches the current
    config hash and input hashes."""

    def __init__(self, outdir: Path, name: str, chash: str):
        self.outdir = outdir
        self.name = name
        self.chash = chash

    def fresh(self, outputs: list[str], inputs: list[Path]) -> bool:
        stamp = self.outdir / f"{self.name}.stamp.json"
        if not stamp.exists():
            return False
        if any(not (self.outdir / o).exists() for o in outputs):
            return False
        want = {
            "config_hash": self.chash,
            "inputs": [_file_hash(p) for p in inputs],
        }
        try:
            have = json.loads(stamp.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return False
        return have == want

    def write_stamp(self, inputs: list[Path]) -> None:
        _write_json(
            self.outdir / f"{self.name}.stamp.json",
            {"config_hash": self.chash, "inputs": [_file_hash(p) for p in inputs]},
        )


def _train_classifiers(corpus: Corpus, cfg: dict, seed: int):
    sc = cfg["strategy"]
    out = {}
    for role in (ROLE_EE, ROLE_ER):
        X, y = strategy.labeled_turns(corpus, role)
        tc = TrainConfig(
            learning_rate=sc["learning_rate"],
            batch_size=sc["batch_size"],
            epochs=sc["epochs"],
            seed=seed,
        )
        out[role] = strategy.train_classifier(X, y, role, corpus.vocab(role), tc)
    return out[ROLE_EE], out[ROLE_ER]


def _variant_name(variant: dict) -> str:
    return "{}-{}-{}".format(
        variant["engine"], variant["actions"], "latent" if variant["latent"] else "nolatent"
    )


def _fit_engine(kind, train_corpus, tp3m_model, latent, cfg, seed):
    transitions = to_transitions(train_corpus)
    traits = cfengine.transition_traits(tp3m_model if latent else None, train_corpus, latent=latent)
    if kind == "scm":
        return cfengine.fit_scm(transitions, traits, hidden=tuple(cfg["scm_hidden"]))
    return cfengine.fit_kqr(transitions, traits, pca_dim=cfg["kqr_pca_dim"], seed=seed)


def run_pipeline(cfg: dict, grid: bool = False) -> dict:
    """Execute the pipeline for one variant (or the full eight-variant grid)
    and write the report bundle."""
    if not cfg.get("corpus"):
        raise ConfigError("config needs a corpus path")
    outdir = Path(cfg["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "curves").mkdir(exist_ok=True)
    chash = config_hash(cfg)
    seed = int(cfg["seed"])
    corpus_path = Path(cfg["corpus"])
    report: dict = {"config_hash": chash, "seed": seed, "stages": [], "grid": grid}

    corpus = load_corpus(corpus_path)
    report["stages"].append("ingest")
    report["n_dialogues"] = len(corpus.dialogues)

    train_corpus, test_corpus = split(corpus, cfg["train_fraction"], seed)
    report["split"] = {"train": len(train_corpus.dialogues), "test": len(test_corpus.dialogues)}

    # strategy classifiers + annotation
    stage = Stage(outdir, "annotate", chash)
    ann_path = outdir / "corpus_annotated.jsonl"
    if stage.fresh(["corpus_annotated.jsonl", "ee_clf.json", "er_clf.json"], [corpus_path]):
        annotated = load_corpus(ann_path)
        ee_clf = strategy.StrategyClassifier.load(outdir / "ee_clf.json")
        er_clf = strategy.StrategyClassifier.load(outdir / "er_clf.json")
    else:
        ee_clf, er_clf = _train_classifiers(train_corpus, cfg, seed)
        annotated = strategy.annotate(corpus, ee_clf, er_clf)
        save_corpus(annotated, ann_path)
        ee_clf.save(outdir / "ee_clf.json")
        er_clf.save(outdir / "er_clf.json")
        stage.write_stamp([corpus_path])
    report["stages"].append("annotate")
    report["similarity"] = strategy.similarity_report(annotated)

    # trait model
    stage = Stage(outdir, "tp3m", chash)
    tp3m_path = outdir / "tp3m.json"
    tc = cfg["tp3m"]
    if stage.fresh(["tp3m.json"], [corpus_path]):
        tp3m_model = personality.Tp3m.load(tp3m_path)
    else:
        tp3m_model = personality.train_tp3m(
            train_corpus,
            TrainConfig(
                learning_rate=tc["learning_rate"],
                batch_size=tc["batch_size"],
                epochs=tc["epochs"],
                seed=seed,
            ),
            hidden=tuple(tc["hidden"]),
        )
        tp3m_model.save(tp3m_path)
        stage.write_stamp([corpus_path])
    report["stages"].append("tp3m")
    eval_part = test_corpus if len(test_corpus.dialogues) >= 30 else corpus
    tp3m_metrics = personality.eval_tp3m(tp3m_model, eval_part)
    tp3m_metrics.pop("per_trait", None)
    report["tp3m_metrics"] = tp3m_metrics
    report["tp3m_cca"] = personality.cca_report(tp3m_model, eval_part).tolist()

    # causal discovery
    stage = Stage(outdir, "discover", chash)
    graph_path = outdir / "graph.json"
    gc = cfg["grasp"]
    gconf = grasp.GraspConfig(
        depth=gc["depth"], tier=gc["tier"], penalty_c=gc["penalty_c"],
        restarts=gc["restarts"], seed=seed,
    )
    if stage.fresh(["graph.json"], [ann_path]):
        graph = grasp.CausalGraph.load(graph_path)
    else:
        matrix = grasp.build_strategy_matrix(annotated)
        full_graph = grasp.search(matrix, gconf)
        graph, discarded = grasp.orient_filter(full_graph, corpus.ee_vocab, corpus.er_vocab)
        graph.save(graph_path)
        report["discover_discarded"] = discarded
        stage.write_stamp([ann_path])
    report["stages"].append("discover")
    report["graph_edges"] = sorted([e.cause, e.effect] for e in graph.edges)
    if cfg["bootstrap"]:
        matrix = grasp.build_strategy_matrix(annotated)
        freqs = grasp.bootstrap_stability(matrix, gconf, b=cfg["bootstrap"], workers=cfg["workers"])
        report["bootstrap"] = {f"{c}->{e}": f for (c, e), f in freqs.items()}

    # reward model
    stage = Stage(outdir, "ddp", chash)
    ddp_path = outdir / "ddp.json"
    if stage.fresh(["ddp.json"], [corpus_path]):
        ddp = reward.DdpModel.load(ddp_path)
    else:
        ddp = reward.train_ddp(train_corpus, ridge=cfg["ddp"]["ridge"], seed=seed)
        ddp.save(ddp_path)
        stage.write_stamp([corpus_path])
    report["stages"].append("ddp")
    test_pred = [reward.predict_donation(ddp, d) for d in test_corpus.dialogues]
    test_actual = [d.donation_ee for d in test_corpus.dialogues]
    if len(test_actual) >= 2:
        report["ddp_test_metrics"] = regression_metrics(test_pred, test_actual)

    # ground-truth curves over the full corpus
    actual = reward.CumulativeRewardSeries.from_rewards(d.donation_ee for d in annotated.dialogues)
    predicted = policy.evaluate(ddp, annotated.dialogues)
    actual.to_csv(outdir / "curves" / "gt.csv")
    predicted.to_csv(outdir / "curves" / "pred_gt.csv")
    report["totals"] = {"gt": actual.total, "pred_gt": predicted.total}

    variants = (
        [
            {"engine": e, "actions": a, "latent": l}
            for e in ("scm", "kqr")
            for a in ("causal", "random")
            for l in (True, False)
        ]
        if grid
        else [cfg["variant"]]
    )
    index = retrieval.build_index(annotated)
    engines: dict = {}
    for variant in variants:
        name = _variant_name(variant)
        ekey = (variant["engine"], variant["latent"])
        if ekey not in engines:
            engines[ekey] = _fit_engine(
                variant["engine"], _annotated_subset(annotated, train_corpus), tp3m_model,
                variant["latent"], cfg, seed,
            )
        engine = engines[ekey]
        databases = cfengine.build_database(
            annotated,
            variant["engine"],
            engine,
            graph,
            tp3m_model if variant["latent"] else None,
            ee_clf,
            cfg["n_databases"],
            seed,
            actions=variant["actions"],
            latent=variant["latent"],
            index=index,
        )
        curve = policy.evaluate_mean(ddp, databases)
        curve.to_csv(outdir / "curves" / f"{name}.csv")
        report["totals"][name] = curve.total
        if cfg["run_policy"]:
            pc = cfg["policy"]
            pconf = policy.PolicyConfig(
                gamma=pc["gamma"],
                batch_size=pc["batch_size"],
                learning_rate=pc["learning_rate"],
                target_sync=pc["target_sync"],
                updates=pc["updates"],
                hidden=pc["hidden"],
                seed=seed,
            )
            qnet = policy.DuelingQNet(
                corpus.embedding_dim, corpus.embedding_dim, hidden=pc["hidden"], seed=seed
            )
            qnet, trace = policy.train(qnet, databases, annotated, ddp, pconf)
            qnet.save(outdir / f"d3qn_{name}.json")
            dstar = policy.rollout(qnet, databases, annotated)
            dcurve = policy.evaluate(ddp, dstar)
            dcurve.to_csv(outdir / "curves" / f"{name}_dstar.csv")
            report["totals"][f"{name}_dstar"] = dcurve.total
            report.setdefault("policy_final_loss", {})[name] = trace[-1]
        report["stages"].append(f"variant:{name}")

    _write_json(outdir / "report.json", report)
    return report


def _annotated_subset(annotated: Corpus, part: Corpus) -> Corpus:
    ids = {d.id for d in part.dialogues}
    return Corpus(
        annotated.embedding_dim,
        annotated.ee_vocab,
        annotated.er_vocab,
        [d for d in annotated.dialogues if d.id in ids],
    )


def print_report(outdir: Path) -> str:
    path = outdir / "report.json"
    if not path.exists():
        raise DataError(f"no report bundle at {outdir}")
    report = json.loads(path.read_text(encoding="utf-8"))
    totals = report.get("totals", {})
    width = max((len(k) for k in totals), default=10)
    lines = [f"{'variant'.ljust(width)}  total"]
    for key in sorted(totals):
        lines.append(f"{key.ljust(width)}  {totals[key]:10.2f}")
    table = "\n".join(lines)
    rows = ["variant,total"] + [f"{k},{totals[k]!r}" for k in sorted(totals)]
    (outdir / "summary.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return table


# ---------------------------------------------------------------------------
# subcommands


def _cmd_ingest(args) -> int:
    corpus = load_corpus(args.corpus)
    n_turns = sum(len(d.turns) for d in corpus.dialogues)
    print(
        json.dumps(
            {
                "dialogues": len(corpus.dialogues),
                "turns": n_turns,
                "embedding_dim": corpus.embedding_dim,
                "ee_vocab": len(corpus.ee_vocab),
                "er_vocab": len(corpus.er_vocab),
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_synth(args) -> int:
    if args.spec:
        spec = synthworld.WorldSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    else:
        spec = synthworld.WorldSpec(seed=args.seed)
    if args.seed is not None and args.spec:
        spec = synthworld.WorldSpec(**{**json.loads(spec.to_json()), "seed": args.seed,
                                       "true_edges": spec.edges()})
    corpus, truth = synthworld.generate(spec, args.m)
    save_corpus(corpus, args.out)
    if args.truth:
        synthworld.save_truth(truth, args.truth)
    print(json.dumps({"dialogues": len(corpus.dialogues), "out": args.out}, sort_keys=True))
    return 0


def _cmd_annotate(args) -> int:
    corpus = load_corpus(args.corpus)
    ee_clf = strategy.StrategyClassifier.load(args.ee)
    er_clf = strategy.StrategyClassifier.load(args.er)
    out = strategy.annotate(corpus, ee_clf, er_clf)
    save_corpus(out, args.out)
    return 0


def _cmd_train_strategy(args) -> int:
    corpus = load_corpus(args.corpus)
    X, y = strategy.labeled_turns(corpus, args.role)
    clf = strategy.train_classifier(
        X, y, args.role, corpus.vocab(args.role),
        strategy.default_classifier_config(seed=args.seed),
    )
    clf.save(args.out)
    mean, std, _ = strategy.crossval(X, y, args.role, corpus.vocab(args.role), seed=args.seed)
    print(json.dumps({"cv_accuracy_mean": mean, "cv_accuracy_std": std}, sort_keys=True))
    return 0


def _cmd_train_personality(args) -> int:
    corpus = load_corpus(args.corpus)
    model = personality.train_tp3m(corpus)
    model.save(args.out)
    return 0


def _cmd_eval_personality(args) -> int:
    corpus = load_corpus(args.corpus)
    model = personality.Tp3m.load(args.model)
    metrics = personality.eval_tp3m(model, corpus)
    metrics.pop("per_trait", None)
    corrs = personality.cca_report(model, corpus)
    lines = ["metric,value"]
    for k in sorted(metrics):
        lines.append(f"{k},{metrics[k]!r}")
    for i, c in enumerate(corrs):
        lines.append(f"cca_{i + 1},{c!r}")
    Path(args.report).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def _cmd_discover(args) -> int:
    corpus = load_corpus(args.corpus)
    cfg = resolve_config(args.config, seed=args.seed)
    gc = cfg["grasp"]
    gconf = grasp.GraspConfig(
        depth=gc["depth"], tier=gc["tier"], penalty_c=gc["penalty_c"],
        restarts=gc["restarts"], seed=cfg["seed"],
    )
    matrix = grasp.build_strategy_matrix(corpus)
    graph = grasp.search(matrix, gconf)
    graph, discarded = grasp.orient_filter(graph, corpus.ee_vocab, corpus.er_vocab)
    graph.save(args.out)
    out = {"edges": len(graph.edges), "discarded": discarded}
    if args.bootstrap:
        freqs = grasp.bootstrap_stability(matrix, gconf, b=args.bootstrap, workers=cfg["workers"])
        out["bootstrap"] = {f"{c}->{e}": f for (c, e), f in freqs.items()}
    print(json.dumps(out, sort_keys=True))
    return 0


def _cmd_build_cf(args) -> int:
    corpus = load_corpus(args.corpus)
    cfg = resolve_config(args.config, seed=args.seed)
    graph = grasp.CausalGraph.load(args.graph) if args.graph else None
    tp3m_model = personality.Tp3m.load(args.tp3m) if args.tp3m else None
    ee_clf = strategy.StrategyClassifier.load(args.ee_clf)
    latent = not args.no_latent
    engine = _fit_engine(args.engine, corpus, tp3m_model, latent, cfg, cfg["seed"])
    databases = cfengine.build_database(
        corpus, args.engine, engine, graph, tp3m_model if latent else None, ee_clf,
        args.n, cfg["seed"], actions=args.actions, latent=latent,
    )
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for db in databases:
        cfengine.save_database(db, corpus, outdir / f"cf_{db.index:03d}.jsonl")
    print(json.dumps({"databases": len(databases), "out_dir": str(outdir)}, sort_keys=True))
    return 0


def _cmd_train_reward(args) -> int:
    corpus = load_corpus(args.corpus)
    model = reward.train_ddp(corpus, ridge=args.ridge, seed=args.seed)
    model.save(args.out)
    return 0


def _cmd_train_policy(args) -> int:
    corpus = load_corpus(args.corpus)
    ddp = reward.DdpModel.load(args.ddp)
    cfg = resolve_config(args.config, seed=args.seed)
    paths = sorted(globmod.glob(args.db_glob))
    if not paths:
        raise DataError(f"no databases match {args.db_glob!r}")
    databases = []
    for i, p in enumerate(paths):
        db_corpus = load_corpus(p)
        databases.append(cfengine.CfDatabase(index=i, dialogues=db_corpus.dialogues))
    pc = cfg["policy"]
    pconf = policy.PolicyConfig(
        gamma=pc["gamma"], batch_size=pc["batch_size"], learning_rate=pc["learning_rate"],
        target_sync=pc["target_sync"], updates=pc["updates"], hidden=pc["hidden"],
        seed=cfg["seed"],
    )
    qnet = policy.DuelingQNet(
        corpus.embedding_dim, corpus.embedding_dim, hidden=pc["hidden"], seed=cfg["seed"]
    )
    qnet, trace = policy.train(qnet, databases, corpus, ddp, pconf)
    qnet.save(args.out)
    print(json.dumps({"updates": len(trace), "final_loss": trace[-1]}, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    ddp = reward.DdpModel.load(args.ddp)
    corpus = load_corpus(args.dialogues)
    series = policy.evaluate(ddp, corpus.dialogues)
    series.to_csv(args.out)
    print(json.dumps({"total": series.total, "dialogues": len(corpus.dialogues)}, sort_keys=True))
    return 0


def _cmd_run(args) -> int:
    cfg = resolve_config(args.config, seed=args.seed, workers=args.workers)
    report = run_pipeline(cfg, grid=args.grid)
    print(json.dumps({"outdir": cfg["outdir"], "totals": report["totals"]}, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    print(print_report(Path(args.bundle)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfpersuade")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus file")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("annotate", help="fill missing strategies with predictions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ee", required=True)
    p.add_argument("--er", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("train-strategy", help="train one role's strategy classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--role", choices=[ROLE_EE, ROLE_ER], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_strategy)

    p = sub.add_parser("train-personality", help="train the trait regressor")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_personality)

    p = sub.add_parser("eval-personality", help="metrics + CCA report")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_eval_personality)

    p = sub.add_parser("discover", help="causal discovery over strategy counts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--bootstrap", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_discover)

    p = sub.add_parser("build-cf", help="build counterfactual databases")
    p.add_argument("--corpus", required=True)
    p.add_argument("--engine", choices=["scm", "kqr"], required=True)
    p.add_argument("--graph")
    p.add_argument("--tp3m")
    p.add_argument("--ee-clf", dest="ee_clf", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--actions", choices=["causal", "random"], default="causal")
    p.add_argument("--no-latent", dest="no_latent", action="store_true")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_build_cf)

    p = sub.add_parser("train-reward", help="fit the donation predictor")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ridge", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_reward)

    p = sub.add_parser("train-policy", help="offline Q-learning over databases")
    p.add_argument("--db-glob", dest="db_glob", required=True)
    p.add_argument("--ddp", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train_policy)

    p = sub.add_parser("evaluate", help="cumulative reward curve of a dialogue file")
    p.add_argument("--ddp", required=True)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline into a report bundle")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", action="store_true", help="run all eight variants")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="summarize a report bundle")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
