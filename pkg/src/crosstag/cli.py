"""Command-line front end.

Subcommands wire the library into the experimental workflow:

    crosstag train     --config run.cfg [flag overrides]
    crosstag tag       MODEL INPUT OUTPUT [--language L]
    crosstag eval      GOLD PRED [--types per,loc,...] [--json]
    crosstag gradcheck [--config run.cfg] [--inject-fault GROUP]
    crosstag sweep-mu  --config run.cfg --mu-values 0,0.5,1

Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
3 data error, 4 numeric error.  All randomness flows from the config
seed; outputs are written atomically.  Heavy imports happen after the
thread cap is applied so `--threads` reaches the BLAS runtime.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _cap_threads(n: int) -> None:
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)


def _load_config(args) -> "ExperimentConfig":
    from .config import ConfigError, parse_config_text, resolve_config

    file_values = {}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            file_values = parse_config_text(fh.read())
    overrides = {}
    for key in ("seed", "threads", "mu", "epochs", "out"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "model_kind", None) is not None:
        overrides["model_kind"] = args.model_kind
    return resolve_config(file_values, overrides)


def _read_manifest_corpora(config):
    """Load and split every manifest entry; returns (tagset, target, sources).

    target is (language, train, dev, test); sources is a list of
    (language, train) with each source truncated to its split size.
    """
    from .config import ConfigError
    from .corpus import (
        CorpusError,
        SplitSpec,
        TagSet,
        load_manifest,
        make_splits,
        parse_conll,
    )
    from .rng import shuffled_indices

    if not config.manifest:
        raise ConfigError("no manifest configured")
    if not os.path.exists(config.manifest):
        raise ConfigError(f"manifest not found: {config.manifest}")
    entries = load_manifest(config.manifest)
    tagset = TagSet(config.entity_types())
    target = None
    sources = []
    for entry in entries:
        with open(entry.path, encoding="utf-8") as fh:
            parsed = parse_conll(fh.read(), entry.language, tagset)
        sentences = list(parsed)
        if entry.role == "target":
            if target is not None:
                raise CorpusError("manifest lists more than one target corpus")
            splits = make_splits(
                sentences,
                SplitSpec(config.target_train, config.dev, config.test, config.seed),
            )
            target = (entry.language, splits.train, splits.dev, splits.test)
        else:
            order = shuffled_indices(len(sentences), config.seed)
            take = min(config.source_train, len(sentences))
            sources.append((entry.language, [sentences[i] for i in order[:take]]))
    if target is None:
        raise CorpusError("manifest lists no target corpus")
    return tagset, target, sources


def _train_from_config(config, log=print):
    """Shared by cmd_train and cmd_sweep_mu; returns (model, dev_report)."""
    from .corpus import TagSet
    from .loglinear import LogLinearModel, train_lbfgs
    from .neural import NeuralModel
    from .serialize import save_model, write_atomic
    from .training import TrainConfig, TransferTask, evaluate, train

    tagset, (tlang, ttrain, tdev, ttest), sources = _read_manifest_corpora(config)
    os.makedirs(config.out, exist_ok=True)
    history_lines: str

    if config.model_kind == "loglinear":
        corpus = list(ttrain)
        for _, strain in sources:
            corpus.extend(strain)
        languages = {s.language for s in corpus}
        conjoin = (
            len(languages) > 1
            if config.conjoin_language == "auto"
            else config.conjoin_language == "true"
        )
        model = LogLinearModel(tagset, conjoin_language=conjoin)
        model.fit_index(corpus)
        result = train_lbfgs(model, corpus, l2=config.l2_value())
        report = evaluate(model, tdev, tagset)
        import json

        record = {
            "epoch": result.iterations,
            "train_loss": result.f,
            "dev_p": report.precision,
            "dev_r": report.recall,
            "dev_f1": report.f1,
            "wall_ms": 0,
        }
        history_lines = json.dumps(record, sort_keys=True) + "\n"
        write_atomic(
            os.path.join(config.out, "history.jsonl"), history_lines.encode("utf-8")
        )
        log(
            f"loglinear: {result.iterations} iterations, converged={result.converged}, "
            f"dev F1 {report.f1:.2f}"
        )
    else:
        kind = config.model_kind.split("-", 1)[1]
        if kind == "xling":
            build_corpus = list(ttrain)
            for _, strain in sources:
                build_corpus.extend(strain)
            task_sources = sources
        else:
            build_corpus = list(ttrain)
            task_sources = []
        model = NeuralModel.build(
            tagset,
            build_corpus,
            config.build_dims(),
            kind=kind,
            tag_dependent_emission=config.tag_dependent_emission,
            seed=config.seed,
        )
        task = TransferTask(tlang, list(ttrain), list(tdev), task_sources, config.mu)
        tc = TrainConfig(
            epochs=config.epochs,
            batch_size=config.batch_size,
            seed=config.seed,
            learning_rate=config.learning_rate,
            rho=config.rho,
            eps=config.eps,
            checkpoint_dir=config.out,
            checkpoint_every=config.checkpoint_every,
            select=config.select,
            timing=config.timing,
        )
        result = train(task, tc, model)
        report = evaluate(model, tdev, tagset)
        log(
            f"{config.model_kind}: best epoch {result.best_epoch}, "
            f"dev F1 {result.best_dev_f1:.2f}"
        )
    save_model(model, os.path.join(config.out, "model"))
    return model, report


def cmd_train(args) -> int:
    from .config import render_config
    from .serialize import write_atomic

    config = _load_config(args)
    _cap_threads(config.threads)
    model, _ = _train_from_config(config)
    write_atomic(
        os.path.join(config.out, "resolved.cfg"),
        render_config(config).encode("utf-8"),
    )
    return EXIT_OK


def _read_token_groups(text: str) -> list[list[str]]:
    """Sentences of whitespace-led tokens; extra columns are ignored."""
    groups: list[list[str]] = []
    current: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            if current:
                groups.append(current)
                current = []
            continue
        current.append(line.split()[0])
    if current:
        groups.append(current)
    return groups


def cmd_tag(args) -> int:
    from .corpus import Sentence, bio_repair
    from .serialize import load_model, write_atomic

    model = load_model(args.model)
    with open(args.input, encoding="utf-8") as fh:
        groups = _read_token_groups(fh.read())
    language = args.language
    if language is None:
        known = getattr(model, "languages", ())
        if len(known) == 1:
            language = known[0]
        else:
            print(
                "error: model knows several languages; pass --language",
                file=sys.stderr,
            )
            return EXIT_USAGE
    out_lines: list[str] = []
    for tokens in groups:
        sentence = Sentence(tuple(tokens), language)
        tags, _ = bio_repair(model.decode(sentence), model.tagset)
        for token, tag in zip(tokens, tags):
            out_lines.append(f"{token} {model.tagset.name(tag)}")
        out_lines.append("")
    data = ("\n".join(out_lines) + "\n") if out_lines else ""
    write_atomic(args.output, data.encode("utf-8"))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .corpus import TagSet, parse_conll
    from .evaluation import EvalError, entity_f1, render_text, report_json

    types = tuple(t.strip().lower() for t in args.types.split(",") if t.strip())
    tagset = TagSet(types)
    with open(args.gold, encoding="utf-8") as fh:
        gold = list(parse_conll(fh.read(), args.language, tagset))
    with open(args.pred, encoding="utf-8") as fh:
        pred_parsed = parse_conll(fh.read(), args.language, tagset)
    pred = [list(s.tags) for s in pred_parsed]
    report = entity_f1(gold, pred, tagset)
    print(render_text(report))
    if args.json:
        print(report_json(report))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .neural import NeuralModel, grad_check

    config = _load_config(args)
    _cap_threads(config.threads)
    if config.model_kind == "loglinear":
        print("error: gradcheck requires a neural model kind", file=sys.stderr)
        return EXIT_USAGE
    if config.manifest:
        tagset, (tlang, ttrain, tdev, ttest), sources = _read_manifest_corpora(config)
        corpus = list(ttrain)
        for _, strain in sources:
            corpus.extend(strain)
        example = ttrain[0]
    else:
        from .synthetic import make_transfer_pair

        pair = make_transfer_pair(
            config.seed, n_target_train=6, n_source_train=6, n_dev=1, n_test=1
        )
        tagset = pair.tagset
        corpus = pair.target_train + pair.source_train
        example = pair.target_train[0]
    model = NeuralModel.build(
        tagset,
        corpus,
        config.build_dims(),
        kind=config.model_kind.split("-", 1)[1],
        tag_dependent_emission=config.tag_dependent_emission,
        seed=config.seed,
    )
    report = grad_check(
        model, example, seed=config.seed, corrupt_group=args.inject_fault
    )
    print(report)
    return EXIT_OK if report.max_rel_err <= 1e-4 else EXIT_CHECK


def cmd_sweep_mu(args) -> int:
    from dataclasses import replace

    from .serialize import write_atomic

    base = _load_config(args)
    _cap_threads(base.threads)
    if base.model_kind != "neural-xling":
        print("error: sweep-mu requires model_kind neural-xling", file=sys.stderr)
        return EXIT_USAGE
    raw = [v for v in args.mu_values.split(",") if v.strip()] if args.mu_values else []
    if not raw:
        print("error: --mu-values must list at least one value", file=sys.stderr)
        return EXIT_USAGE
    values = [float(v) for v in raw]
    rows = []
    for mu in values:
        config = replace(base, mu=mu, out=os.path.join(base.out, f"mu_{mu:g}"))
        config.dims = dict(base.dims)
        os.makedirs(config.out, exist_ok=True)
        _, report = _train_from_config(config)
        rows.append((mu, report.f1))
    rows.sort(key=lambda r: (-r[1], r[0]))
    lines = [f"{'mu':>8} {'dev_f1':>8}"]
    for mu, f1 in rows:
        lines.append(f"{mu:>8g} {f1:>8.2f}")
    table = "\n".join(lines) + "\n"
    print(table, end="")
    os.makedirs(base.out, exist_ok=True)
    write_atomic(os.path.join(base.out, "sweep_mu.txt"), table.encode("utf-8"))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crosstag", description="Sequence labeling with CRFs and transfer."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--mu", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--model-kind", dest="model_kind", choices=[
            "loglinear", "neural-mono", "neural-xling"])
        p.add_argument("--out")

    p_train = sub.add_parser("train", help="train a model from a manifest")
    common(p_train)
    p_train.set_defaults(handler=cmd_train)

    p_tag = sub.add_parser("tag", help="tag a token file with a trained model")
    p_tag.add_argument("model")
    p_tag.add_argument("input")
    p_tag.add_argument("output")
    p_tag.add_argument("--language")
    p_tag.set_defaults(handler=cmd_tag)

    p_eval = sub.add_parser("eval", help="score predictions against gold")
    p_eval.add_argument("gold")
    p_eval.add_argument("pred")
    p_eval.add_argument("--language", default="xx")
    p_eval.add_argument("--types", default="per,loc,org,misc")
    p_eval.add_argument("--json", action="store_true")
    p_eval.set_defaults(handler=cmd_eval)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(p_gc)
    p_gc.add_argument("--inject-fault", metavar="GROUP",
                      help="corrupt one gradient group (checker self-test)")
    p_gc.set_defaults(handler=cmd_gradcheck)

    p_sweep = sub.add_parser("sweep-mu", help="train per mu value, rank dev F1")
    common(p_sweep)
    p_sweep.add_argument("--mu-values", help="comma-separated list, e.g. 0,0.5,1")
    p_sweep.set_defaults(handler=cmd_sweep_mu)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "threads", None):
        _cap_threads(args.threads)
    from .config import ConfigError
    from .corpus import CorpusError, ParseError
    from .evaluation import EvalError
    from .optim import NumericError
    from .serialize import SerializeError

    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, CorpusError, SerializeError, EvalError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
