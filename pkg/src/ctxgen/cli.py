"""Pipeline front door.

Subcommands mirror the pipeline stages::

    preprocess -> build-vocab -> train-embeddings -> cluster ->
    build-dataset -> train-lm -> generate / evaluate -> curves

Every stage validates the manifest chain of its inputs, derives its RNG seed
from the single run-level seed, and writes its artifact plus a manifest.
Settings come from a TOML config file with per-stage sections; command-line
flags override the file.  Exit codes: 0 success, 2 config error,
3 dependency error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import re
import sys
from dataclasses import asdict

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import cluster_context, corpus, embedding, evaluation, lm, tfidf_context
from .errors import (
    ConfigurationError,
    CtxgenError,
    DegenerateSentenceError,
    DependencyError,
    NoSignalError,
    NumericOverflowError,
    TrainingDivergedError,
    UnknownContextWordError,
    ZeroVectorError,
)
from .generation import (
    ClusterBackend,
    GenerationRequest,
    NullBackend,
    TfidfBackend,
    generate,
)
from .manifest import RunManifest, derive_seed, validate_inputs, write_manifest, load_manifest

RUN_DIR_ENV = "CTXGEN_RUN_DIR"

DEFAULTS: dict[str, dict] = {
    "run": {"seed": 0, "run_dir": "run"},
    "preprocess": {"min_len": 7, "max_sentences": 100_000, "lowercase": True},
    "vocab": {"max_vocab": 0},
    "embeddings": {"dim": 200, "window": 5, "negatives": 5, "epochs": 5, "lr": 0.025},
    "cluster": {
        "k": 100,
        "n_top": 5,
        "max_iters": 100,
        "tol": 1e-6,
        "spherical": False,
        "top_metric": "cosine",
    },
    "dataset": {"context_mode": "cluster", "window": 8},
    "lm": {
        "hidden": 256,
        "epochs": 9,
        "batch_size": 32,
        "lr": 0.05,
        "optimizer": "sgd",
        "bidirectional": True,
        "cell_activation": "tanh",
        "context_position": "prepend",
    },
    "generate": {"max_len": 60, "temperature": 0.0},
    "evaluate": {"contexts": "", "seeds": "", "lexicon": "", "cadence": 3, "max_len": 60},
}


def load_config(path: str | None) -> dict[str, dict]:
    config = {section: dict(values) for section, values in DEFAULTS.items()}
    if path is None:
        return config
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}")
    for section, values in raw.items():
        if section not in config:
            raise ConfigurationError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigurationError(f"config section [{section}] must be a table")
        for key, value in values.items():
            if key not in config[section]:
                raise ConfigurationError(f"unknown config key {section}.{key}")
            config[section][key] = value
    return config


def setting(config: dict, args: argparse.Namespace, section: str, key: str, flag: str | None = None):
    """Resolve one setting: CLI flag beats config file beats default."""
    value = getattr(args, (flag or key).replace("-", "_"), None)
    if value is not None:
        return value
    return config[section][key]


def resolve_run_dir(config: dict, args: argparse.Namespace) -> str:
    if getattr(args, "run_dir", None):
        return args.run_dir
    env = os.environ.get(RUN_DIR_ENV)
    if env:
        return env
    return config["run"]["run_dir"]


@contextlib.contextmanager
def run_lock(run_dir: str):
    os.makedirs(run_dir, exist_ok=True)
    lock = os.path.join(run_dir, ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DependencyError(
            f"run directory {run_dir} is locked by another running stage ({lock})"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        os.unlink(lock)


def _paths(run_dir: str) -> dict[str, str]:
    join = lambda *parts: os.path.join(run_dir, *parts)  # noqa: E731
    return {
        "sentences": join("sentences.txt"),
        "caps": join("sentences.caps.txt"),
        "vocab": join("vocab.tsv"),
        "embeddings-domain": join("embeddings-domain.vec"),
        "embeddings-external": join("embeddings-external.vec"),
        "clusters": join("clusters.txt"),
        "instances": join("instances.bin"),
        "instances_tsv": join("instances.tsv"),
        "tfidf_contexts": join("tfidf-contexts.tsv"),
        "checkpoints": join("checkpoints"),
        "metrics": join("metrics.csv"),
        "generation": join("generation.json"),
        "curves": join("curves.csv"),
        "eval_svg": join("eval_curves.svg"),
        "train_svg": join("training_curves.svg"),
    }


# ---------------------------------------------------------------------------
# Stage implementations


def stage_preprocess(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    with run_lock(run_dir):
        checks = validate_inputs("preprocess", {"corpus": args.input})
        with open(args.input, "rb") as fh:
            raw = fh.read()
        min_len = setting(config, args, "preprocess", "min_len")
        max_sentences = setting(config, args, "preprocess", "max_sentences")
        lowercase = False if args.keep_case else config["preprocess"]["lowercase"]
        sentences, caps = corpus.preprocess_with_caps(
            raw, min_len=min_len, max_sentences=max_sentences, lowercase=lowercase
        )
        corpus.save_sentences(sentences, paths["sentences"])
        corpus.save_caps(caps, paths["caps"])
        man = RunManifest(
            stage="preprocess",
            seed=derive_seed(config["run"]["seed"], "preprocess"),
            config={"min_len": min_len, "max_sentences": max_sentences, "lowercase": lowercase},
        )
        man.inputs["corpus"] = {"path": os.path.abspath(args.input), "sha256": checks["corpus"]}
        man.record_output("sentences", paths["sentences"])
        man.record_output("caps", paths["caps"])
        write_manifest(man, paths["sentences"])
    print(f"preprocess: {len(sentences)} sentences -> {paths['sentences']}")
    return 0


def stage_build_vocab(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    with run_lock(run_dir):
        checks = validate_inputs("build-vocab", {"sentences": paths["sentences"]})
        sentences = corpus.load_sentences(paths["sentences"])
        max_vocab = setting(config, args, "vocab", "max_vocab")
        vocab = corpus.build_vocabulary(sentences, max_vocab or None)
        corpus.save_vocab_tsv(vocab, paths["vocab"])
        man = RunManifest(
            stage="build-vocab",
            seed=derive_seed(config["run"]["seed"], "build-vocab"),
            config={"max_vocab": max_vocab},
        )
        man.inputs["sentences"] = {
            "path": os.path.abspath(paths["sentences"]),
            "sha256": checks["sentences"],
        }
        man.record_output("vocab", paths["vocab"])
        write_manifest(man, paths["vocab"])
    print(f"build-vocab: V={vocab.size} -> {paths['vocab']}")
    return 0


def stage_train_embeddings(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    profile = args.profile
    out_path = paths[f"embeddings-{profile}"]
    with run_lock(run_dir):
        inputs = {"vocab": paths["vocab"]}
        if profile == "domain":
            inputs["sentences"] = paths["sentences"]
        else:
            if not args.corpus:
                raise ConfigurationError("--corpus is required for the external profile")
            inputs["corpus"] = args.corpus
        checks = validate_inputs("train-embeddings", inputs)
        vocab = corpus.load_vocab_tsv(paths["vocab"])
        if profile == "domain":
            sentences = corpus.load_sentences(paths["sentences"])
        else:
            with open(args.corpus, "rb") as fh:
                sentences = corpus.preprocess(
                    fh.read(),
                    min_len=config["preprocess"]["min_len"],
                    max_sentences=config["preprocess"]["max_sentences"],
                    lowercase=config["preprocess"]["lowercase"],
                )
        cfg = {
            key: setting(config, args, "embeddings", key)
            for key in ("dim", "window", "negatives", "epochs", "lr")
        }
        seed = derive_seed(config["run"]["seed"], f"train-embeddings-{profile}")
        space = embedding.train_skipgram(
            sentences,
            vocab,
            dim=cfg["dim"],
            window=cfg["window"],
            negatives=cfg["negatives"],
            epochs=cfg["epochs"],
            lr=cfg["lr"],
            seed=seed,
            provenance=profile,
        )
        embedding.save_embeddings(space, out_path)
        man = RunManifest(stage="train-embeddings", seed=seed, config={**cfg, "profile": profile})
        for name, path in inputs.items():
            man.inputs[name] = {"path": os.path.abspath(path), "sha256": checks[name]}
        man.record_output("embeddings", out_path)
        write_manifest(man, out_path)
    print(f"train-embeddings[{profile}]: {len(space.covered_ids)} vectors -> {out_path}")
    return 0


def stage_cluster(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    emb_path = paths[f"embeddings-{args.profile}"]
    with run_lock(run_dir):
        checks = validate_inputs("cluster", {"embeddings": emb_path, "vocab": paths["vocab"]})
        vocab = corpus.load_vocab_tsv(paths["vocab"])
        space = embedding.load_embeddings(emb_path, vocab, provenance=args.profile)
        cfg = {
            key: setting(config, args, "cluster", key)
            for key in ("k", "n_top", "max_iters", "tol", "spherical", "top_metric")
        }
        seed = derive_seed(config["run"]["seed"], "cluster")
        model = cluster_context.kmeans(
            space,
            k=cfg["k"],
            max_iters=cfg["max_iters"],
            tol=cfg["tol"],
            seed=seed,
            n_top=cfg["n_top"],
            spherical=cfg["spherical"],
            top_metric=cfg["top_metric"],
        )
        cluster_context.save_clusters(model, paths["clusters"])
        man = RunManifest(stage="cluster", seed=seed, config=cfg)
        man.inputs["embeddings"] = {"path": os.path.abspath(emb_path), "sha256": checks["embeddings"]}
        man.inputs["vocab"] = {"path": os.path.abspath(paths["vocab"]), "sha256": checks["vocab"]}
        man.record_output("clusters", paths["clusters"])
        write_manifest(man, paths["clusters"])
    print(f"cluster: k={model.k} -> {paths['clusters']}")
    return 0


def stage_build_dataset(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    mode = setting(config, args, "dataset", "context_mode", flag="context_mode")
    if mode not in ("tfidf", "cluster", "none"):
        raise ConfigurationError(f"dataset.context_mode: unknown mode {mode!r}")
    with run_lock(run_dir):
        inputs = {"sentences": paths["sentences"], "vocab": paths["vocab"]}
        if mode == "cluster":
            inputs["embeddings"] = paths[f"embeddings-{args.profile}"]
            inputs["clusters"] = paths["clusters"]
        checks = validate_inputs("build-dataset", inputs)
        sentences = corpus.load_sentences(paths["sentences"])
        vocab = corpus.load_vocab_tsv(paths["vocab"])
        window = setting(config, args, "dataset", "window")

        if mode == "tfidf":
            encoded = corpus.encode_sentences(sentences, vocab)
            model = tfidf_context.fit(encoded, eos_id=vocab.eos_id)
            ctx_fn = lambda sent: tfidf_context.context_of(sent, model, vocab)  # noqa: E731
            if args.dump_contexts:
                tfidf_context.dump_contexts_tsv(encoded, model, vocab, paths["tfidf_contexts"])
        elif mode == "cluster":
            space = embedding.load_embeddings(inputs["embeddings"], vocab, provenance=args.profile)
            cmodel = cluster_context.load_clusters(paths["clusters"])
            if cmodel.space_checksum != space.checksum():
                raise DependencyError(
                    "build-dataset: cluster model was built on a different embedding "
                    "space; rerun cluster",
                    stage="cluster",
                )
            ctx_fn = lambda sent: cluster_context.context_of(sent, space, cmodel, vocab)  # noqa: E731
        else:
            ctx_fn = None

        instances = corpus.make_instances(sentences, vocab, window=window, ctx_fn=ctx_fn)
        corpus.write_instances(instances, vocab.size, paths["instances"])
        corpus.write_instances_tsv(instances, paths["instances_tsv"])
        man = RunManifest(
            stage="build-dataset",
            seed=derive_seed(config["run"]["seed"], "build-dataset"),
            config={"context_mode": mode, "window": window},
        )
        for name, path in inputs.items():
            man.inputs[name] = {"path": os.path.abspath(path), "sha256": checks[name]}
        man.record_output("instances", paths["instances"])
        man.record_output("instances_tsv", paths["instances_tsv"])
        write_manifest(man, paths["instances"])
    print(f"build-dataset[{mode}]: {len(instances)} instances -> {paths['instances']}")
    return 0


def stage_train_lm(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    with run_lock(run_dir):
        checks = validate_inputs("train-lm", {"instances": paths["instances"], "vocab": paths["vocab"]})
        instances, vocab_size, window = corpus.read_instances(paths["instances"])
        if not instances:
            raise ConfigurationError("instance stream is empty; rebuild the dataset")
        ds_manifest = load_manifest(paths["instances"])
        if ds_manifest is not None and "context_mode" in ds_manifest.config:
            context_mode = ds_manifest.config["context_mode"]
        else:
            kind = instances[0].context.kind
            context_mode = {"zero": "none", "one-hot": "tfidf", "bag-of-words": "cluster"}[kind]

        seed = derive_seed(config["run"]["seed"], "train-lm")
        lm_config = lm.LmConfig(
            vocab_size=vocab_size,
            window=window,
            hidden=setting(config, args, "lm", "hidden"),
            bidirectional=(
                not args.unidirectional if args.unidirectional else config["lm"]["bidirectional"]
            ),
            cell_activation=setting(config, args, "lm", "cell_activation"),
            lr=setting(config, args, "lm", "lr"),
            epochs=setting(config, args, "lm", "epochs"),
            batch_size=setting(config, args, "lm", "batch_size"),
            seed=seed,
            context_mode=context_mode,
            optimizer=setting(config, args, "lm", "optimizer"),
            context_position=setting(config, args, "lm", "context_position"),
        )
        os.makedirs(paths["checkpoints"], exist_ok=True)

        def persist(ckpt: lm.Checkpoint) -> None:
            ckpt_path = os.path.join(paths["checkpoints"], f"epoch-{ckpt.epoch:04d}.ckpt")
            lm.save_checkpoint(ckpt, ckpt_path)
            man = RunManifest(
                stage="train-lm",
                seed=seed,
                config={"epoch": ckpt.epoch, **ds_config_snapshot},
            )
            for name, path in (("instances", paths["instances"]), ("vocab", paths["vocab"])):
                man.inputs[name] = {"path": os.path.abspath(path), "sha256": checks[name]}
            man.record_output("checkpoint", ckpt_path)
            write_manifest(man, ckpt_path)

        ds_config_snapshot = asdict(lm_config)
        checkpoints = lm.train(lm_config, instances, on_checkpoint=persist)
        lm.write_metrics_csv(checkpoints, paths["metrics"])
        man = RunManifest(stage="train-lm", seed=seed, config=ds_config_snapshot)
        for name, path in (("instances", paths["instances"]), ("vocab", paths["vocab"])):
            man.inputs[name] = {"path": os.path.abspath(path), "sha256": checks[name]}
        man.record_output("metrics", paths["metrics"])
        write_manifest(man, paths["metrics"])
    last = checkpoints[-1]
    print(
        f"train-lm[{context_mode}]: {len(checkpoints)} checkpoints -> {paths['checkpoints']} "
        f"(final train_loss={last.metrics.get('train_loss')})"
    )
    return 0


def _build_backend(context_mode: str, vocab, paths, profile: str, raw_context: bool):
    if context_mode == "cluster":
        emb_path = paths[f"embeddings-{profile}"]
        space = embedding.load_embeddings(emb_path, vocab, provenance=profile)
        cmodel = cluster_context.load_clusters(paths["clusters"])
        return ClusterBackend(vocab, space, cmodel, raw=raw_context)
    if context_mode == "tfidf":
        return TfidfBackend(vocab)
    return NullBackend(vocab)


def _backend_inputs(context_mode: str, paths, profile: str) -> dict[str, str]:
    if context_mode == "cluster":
        return {"embeddings": paths[f"embeddings-{profile}"], "clusters": paths["clusters"]}
    return {}


def stage_generate(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    with run_lock(run_dir):
        ckpt = lm.load_checkpoint(args.checkpoint)
        inputs = {"checkpoint": args.checkpoint, "vocab": paths["vocab"]}
        inputs.update(_backend_inputs(ckpt.config.context_mode, paths, args.profile))
        checks = validate_inputs("generate", inputs)
        vocab = corpus.load_vocab_tsv(paths["vocab"])
        backend = _build_backend(
            ckpt.config.context_mode, vocab, paths, args.profile, args.raw_context
        )
        temperature = args.temperature
        if temperature is None:
            temperature = config["generate"]["temperature"] or None
        request = GenerationRequest(
            seeds=args.seeds.split(),
            contexts=[c.strip() for c in args.contexts.split(",") if c.strip()],
            max_sentence_len=setting(config, args, "generate", "max_len", flag="max_len"),
            temperature=temperature,
            sample_seed=args.sample_seed,
            pad_seeds=args.pad_seeds,
        )
        result = generate(ckpt, request, backend)
        out_path = args.json_out or paths["generation"]
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        man = RunManifest(
            stage="generate",
            seed=args.sample_seed,
            config={
                "seeds": request.seeds,
                "contexts": request.contexts,
                "temperature": temperature,
                "max_len": request.max_sentence_len,
            },
        )
        for name, path in inputs.items():
            man.inputs[name] = {"path": os.path.abspath(path), "sha256": checks[name]}
        man.record_output("generation", out_path)
        write_manifest(man, out_path)
    for sent in result.sentences:
        flag = " [truncated]" if sent.truncated else ""
        print(f"({sent.context_word}) {' '.join(sent.tokens)}{flag}")
    return 0


def stage_evaluate(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    ckpt_dir = args.checkpoints or paths["checkpoints"]
    contexts_raw = args.contexts or config["evaluate"]["contexts"]
    seeds_raw = args.seeds or config["evaluate"]["seeds"]
    lexicon_path = args.lexicon or config["evaluate"]["lexicon"]
    if not contexts_raw or not seeds_raw:
        raise ConfigurationError("evaluate needs --contexts and --seeds (or config values)")
    if not lexicon_path:
        raise ConfigurationError("evaluate needs --lexicon (noun word list file)")
    cadence = setting(config, args, "evaluate", "cadence")
    with run_lock(run_dir):
        ckpt_files = _checkpoints_at_cadence(ckpt_dir, cadence)
        emb_path = paths[f"embeddings-{args.profile}"]
        inputs = {"vocab": paths["vocab"], "embeddings": emb_path, "lexicon": lexicon_path}
        first = lm.load_checkpoint(ckpt_files[0])
        inputs.update(_backend_inputs(first.config.context_mode, paths, args.profile))
        checks = validate_inputs("evaluate", inputs)
        vocab = corpus.load_vocab_tsv(paths["vocab"])
        space = embedding.load_embeddings(emb_path, vocab, provenance=args.profile)
        tagger = evaluation.NounTagger.from_file(lexicon_path)
        backend = _build_backend(first.config.context_mode, vocab, paths, args.profile, False)
        contexts = [c.strip() for c in contexts_raw.split(",") if c.strip()]
        seeds = seeds_raw.split()
        reports = []
        for path in ckpt_files:
            ckpt = lm.load_checkpoint(path)
            reports.append(
                evaluation.evaluate_checkpoint(
                    ckpt,
                    contexts,
                    seeds,
                    space,
                    tagger,
                    backend,
                    max_sentence_len=setting(config, args, "evaluate", "max_len", flag="max_len"),
                )
            )
        label = reports[0].label
        out_path = args.out or os.path.join(run_dir, f"report-{label}.csv")
        evaluation.write_report_csv(reports, out_path)
        man = RunManifest(
            stage="evaluate",
            seed=derive_seed(config["run"]["seed"], "evaluate"),
            config={"contexts": contexts, "seeds": seeds, "cadence": cadence, "label": label},
        )
        for name, path in inputs.items():
            man.inputs[name] = {"path": os.path.abspath(path), "sha256": checks[name]}
        man.record_output("report", out_path)
        write_manifest(man, out_path)
    try:
        best = evaluation.best_epoch(reports)
        print(f"evaluate[{label}]: {len(reports)} checkpoints, best epoch {best} -> {out_path}")
    except NoSignalError:
        print(f"evaluate[{label}]: {len(reports)} checkpoints, all sentences skipped -> {out_path}")
    return 0


def _checkpoints_at_cadence(ckpt_dir: str, cadence: int) -> list[str]:
    if not os.path.isdir(ckpt_dir):
        raise DependencyError(
            f"evaluate: checkpoint directory {ckpt_dir} missing; run train-lm first",
            stage="train-lm",
        )
    found = []
    for name in sorted(os.listdir(ckpt_dir)):
        m = re.fullmatch(r"epoch-(\d+)\.ckpt", name)
        if m and int(m.group(1)) % cadence == 0 and int(m.group(1)) > 0:
            found.append(os.path.join(ckpt_dir, name))
    if not found:
        raise DependencyError(
            f"evaluate: no checkpoints at cadence {cadence} in {ckpt_dir}; "
            "train for at least that many epochs",
            stage="train-lm",
        )
    return found


def stage_curves(args, config) -> int:
    run_dir = resolve_run_dir(config, args)
    paths = _paths(run_dir)
    report_context = args.report_context or os.path.join(run_dir, "report-context.csv")
    report_base = args.report_base or os.path.join(run_dir, "report-base.csv")
    metrics_path = args.metrics or paths["metrics"]
    with run_lock(run_dir):
        inputs = {"report": report_context}
        if os.path.exists(report_base):
            inputs["report_base"] = report_base
        if os.path.exists(metrics_path):
            inputs["metrics"] = metrics_path
        checks = validate_inputs("curves", inputs)
        context_reports = evaluation.read_report_csv(report_context)
        base_reports = (
            evaluation.read_report_csv(report_base) if "report_base" in inputs else []
        )
        evaluation.write_curves_csv(context_reports, base_reports, paths["curves"])
        series = [
            (
                "context",
                [(r.epoch, r.mean) for r in context_reports if r.mean is not None],
            )
        ]
        if base_reports:
            series.append(
                ("base", [(r.epoch, r.mean) for r in base_reports if r.mean is not None])
            )
        evaluation.render_line_chart_svg(
            paths["eval_svg"],
            series,
            title="Context similarity of generated text over training",
            x_label="epoch",
            y_label="mean cosine similarity",
        )
        outputs = {"curves": paths["curves"], "eval_svg": paths["eval_svg"]}
        if "metrics" in inputs:
            _render_training_curves(metrics_path, paths["train_svg"])
            outputs["train_svg"] = paths["train_svg"]
        man = RunManifest(
            stage="curves",
            seed=derive_seed(config["run"]["seed"], "curves"),
            config={},
        )
        for name, path in inputs.items():
            man.inputs[name] = {"path": os.path.abspath(path), "sha256": checks[name]}
        for name, path in outputs.items():
            man.record_output(name, path)
        write_manifest(man, paths["curves"])
    print(f"curves: -> {paths['curves']}, {paths['eval_svg']}")
    return 0


def _render_training_curves(metrics_path: str, out_path: str) -> None:
    import csv as _csv

    rows = []
    with open(metrics_path, newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            rows.append(row)
    series = []
    for key in ("train_loss", "val_loss", "train_acc", "val_acc"):
        pts = [
            (float(r["epoch"]), float(r[key]))
            for r in rows
            if r.get(key) not in (None, "")
        ]
        if pts:
            series.append((key, pts))
    evaluation.render_line_chart_svg(
        out_path,
        series,
        title="Training and validation metrics",
        x_label="epoch",
        y_label="loss / accuracy",
    )


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file with per-stage sections")
    common.add_argument(
        "--run-dir",
        help=f"artifact directory (overrides ${RUN_DIR_ENV} and the config file)",
    )

    parser = argparse.ArgumentParser(
        prog="ctxgen",
        description="Context-conditioned LSTM text generation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="tokenize raw text into sentences")
    p.add_argument("--input", required=True, help="plain UTF-8 text file")
    p.add_argument("--min-len", type=int, help="minimum content tokens per sentence")
    p.add_argument("--max-sentences", type=int, help="keep at most this many sentences")
    p.add_argument("--keep-case", action="store_true", default=None, help="skip lowercasing")
    p.set_defaults(func=stage_preprocess)

    p = sub.add_parser("build-vocab", parents=[common], help="frequency-ranked vocabulary")
    p.add_argument("--max-vocab", type=int, help="cap vocabulary size (0 = unlimited)")
    p.set_defaults(func=stage_build_vocab)

    p = sub.add_parser("train-embeddings", parents=[common], help="skip-gram word vectors")
    p.add_argument("--profile", choices=["domain", "external"], default="domain")
    p.add_argument("--corpus", help="external corpus text file (external profile)")
    p.add_argument("--dim", type=int, help="embedding dimension")
    p.add_argument("--window", type=int, help="skip-gram context window")
    p.add_argument("--negatives", type=int, help="negative samples per pair")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.set_defaults(func=stage_train_embeddings)

    p = sub.add_parser("cluster", parents=[common], help="k-means over the embedding space")
    p.add_argument("--profile", choices=["domain", "external"], default="domain")
    p.add_argument("--k", type=int, help="number of clusters")
    p.add_argument("--n-top", type=int, help="top words per cluster")
    p.add_argument("--max-iters", type=int, help="Lloyd iteration cap")
    p.add_argument("--tol", type=float, help="center-movement stop threshold")
    p.add_argument("--spherical", action="store_true", default=None, help="normalize before clustering")
    p.add_argument("--top-metric", choices=["cosine", "euclidean"], help="top-word ranking metric")
    p.set_defaults(func=stage_cluster)

    p = sub.add_parser("build-dataset", parents=[common], help="windowed training instances")
    p.add_argument("--context-mode", choices=["tfidf", "cluster", "none"])
    p.add_argument("--window", type=int, help="input window width")
    p.add_argument("--profile", choices=["domain", "external"], default="domain")
    p.add_argument(
        "--dump-contexts", action="store_true", help="also dump per-sentence tf-idf contexts"
    )
    p.set_defaults(func=stage_build_dataset)

    p = sub.add_parser("train-lm", parents=[common], help="train the LSTM language model")
    p.add_argument("--hidden", type=int, help="hidden units per direction")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=["sgd", "adam"])
    p.add_argument("--cell-activation", choices=["tanh", "relu"])
    p.add_argument("--context-position", choices=["prepend", "concat"])
    p.add_argument(
        "--unidirectional", action="store_true", default=None, help="disable the backward pass"
    )
    p.set_defaults(func=stage_train_lm)

    p = sub.add_parser("generate", parents=[common], help="generate one sentence per context")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--seeds", required=True, help='seed words, e.g. "w1 w2 ... w8"')
    p.add_argument("--contexts", required=True, help='comma-separated context words, "c1,c2"')
    p.add_argument("--temperature", type=float, help="sampling temperature (omit for greedy)")
    p.add_argument("--max-len", type=int, help="per-sentence token cap")
    p.add_argument("--sample-seed", type=int, default=0, help="RNG seed for sampling")
    p.add_argument("--profile", choices=["domain", "external"], default="domain")
    p.add_argument(
        "--raw-context",
        action="store_true",
        help="one-hot the context word directly instead of mapping through its cluster",
    )
    p.add_argument("--pad-seeds", action="store_true", help="left-pad short seed lists with <unk>")
    p.add_argument("--json-out", help="write the JSON result here")
    p.set_defaults(func=stage_generate)

    p = sub.add_parser("evaluate", parents=[common], help="score generated text against contexts")
    p.add_argument("--checkpoints", help="checkpoint directory (default run dir)")
    p.add_argument("--contexts", help="comma-separated evaluation context words")
    p.add_argument("--seeds", help="seed words for evaluation generation")
    p.add_argument("--lexicon", help="noun lexicon file, one word per line")
    p.add_argument("--cadence", type=int, help="evaluate every Nth epoch")
    p.add_argument("--max-len", type=int, help="per-sentence token cap")
    p.add_argument("--profile", choices=["domain", "external"], default="domain")
    p.add_argument("--out", help="report CSV path")
    p.set_defaults(func=stage_evaluate)

    p = sub.add_parser("curves", parents=[common], help="render comparison curves CSV + SVG")
    p.add_argument("--report-context", help="context-model report CSV")
    p.add_argument("--report-base", help="base-model report CSV")
    p.add_argument("--metrics", help="training metrics CSV")
    p.set_defaults(func=stage_curves)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except (ConfigurationError, UnknownContextWordError, NoSignalError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 3
    except (
        NumericOverflowError,
        TrainingDivergedError,
        ZeroVectorError,
        DegenerateSentenceError,
    ) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except CtxgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
