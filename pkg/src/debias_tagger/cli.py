"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 data or I/O error,
4 numeric failure (non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import corpus as C
from .evaluation import EvaluationError, evaluate, export_bias
from .gradcheck import run_gradcheck
from .model import ModelFormatError, load_model, save_model
from .neural import NumericError
from .projection import project_corpus, read_parallel, read_projected, select_sentences, write_projected
from .training import ConfigError, load_config, parse_key_values, train_pipeline

log = logging.getLogger("debias_tagger")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _tagset(path) -> C.TagSet:
    return C.TagSet.read(path) if path else C.TagSet.universal()


def _read_gold(path, tagset, mapping_path=None) -> C.GoldCorpus:
    if mapping_path is None:
        return C.read_two_column(path, tagset)
    mapping = C.read_mapping(mapping_path)
    fine = C.TagSet(dict.fromkeys(mapping))
    return C.map_to_universal(C.read_two_column(path, fine), mapping, tagset)


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def cmd_project(args) -> int:
    if args.top_n is not None and args.scores is None:
        raise UsageError("--top-n requires --scores")
    tagset = _tagset(args.tagset_src)
    parallel = read_parallel(args.src, args.tgt, args.align, tagset, args.scores)
    if args.top_n is not None:
        parallel = select_sentences(parallel, args.top_n)
    projected = project_corpus(parallel, tagset)
    write_projected(projected, args.out)
    hard, soft = projected.label_counts()
    print(f"sentences {len(projected)} tokens {projected.token_count} hard {hard} soft {soft}",
          file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    config = load_config(args.config, overrides)
    gold_tags = _tagset(args.tagset_gold)
    train = _read_gold(args.gold_train, gold_tags, args.mapping)
    dev = _read_gold(args.dev, gold_tags, args.mapping)
    projected = None
    if args.projected:
        projected = read_projected(args.projected, _tagset(args.tagset_proj))
    log.info("config %s", config.to_dict())
    model, report = train_pipeline(train, projected, dev, config)
    save_model(model, args.model_out)
    if args.report_out:
        Path(args.report_out).write_text(report.to_json() + "\n", encoding="utf-8")
    best = report.chosen_record
    if best is not None:
        log.info("chosen %s epoch %d dev %.4f", best.stage, best.epoch, best.dev_accuracy)
    return EXIT_OK


def _read_token_lines(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        sentences = [line.split() for line in f]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise C.CorpusError(f"{path}: no sentences to tag")
    return sentences


def cmd_tag(args) -> int:
    model = load_model(args.model)
    sentences = _read_token_lines(args.input)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for tokens in sentences:
            for tok, tag in zip(tokens, model.tag(tokens)):
                out.write(f"{tok}\t{tag}\n")
            out.write("\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_eval(args) -> int:
    if (args.pred is None) == (args.model is None):
        raise UsageError("give exactly one of --pred or --model")
    if args.model:
        model = load_model(args.model)
        tagset = model.gold_tagset
        gold = _read_gold(args.gold, tagset, args.mapping)
        pred = [model.tag_ids(s.tokens) for s in gold]
    else:
        tagset = _tagset(args.tagset)
        gold = _read_gold(args.gold, tagset, args.mapping)
        pred_corpus = C.read_two_column(args.pred, tagset)
        for i, (p, g) in enumerate(zip(pred_corpus, gold)):
            if p.tokens != g.tokens:
                raise EvaluationError(f"sentence {i}: predicted and gold tokens differ")
        pred = pred_corpus.tag_sequences()
    report = evaluate(pred, gold.tag_sequences(), tagset)
    sys.stdout.write(report.to_text())
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_export_bias(args) -> int:
    export_bias(load_model(args.model), args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import ExperimentConfig, run_recovery_experiment

    values = {}
    if args.config:
        values.update(parse_key_values(Path(args.config).read_text(encoding="utf-8"), args.config))
    values.update(_overrides(args.set))
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg = ExperimentConfig.from_values(values)
    report = run_recovery_experiment(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "bias.csv").write_text(report.bias_csv, encoding="utf-8")
    (out / "channel.csv").write_text(report.channel_csv(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(range(args.seed, args.seed + args.models))
    failed = 0
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"seed {r.seed}: {status} ({r.checked} partials, worst rel {r.worst_rel:.2e})")
        failed += not r.ok
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_split(args) -> int:
    tagset = _tagset(args.tagset)
    corpus = _read_gold(args.input, tagset, args.mapping)
    train, rest = C.take_first_tokens(corpus, args.first_tokens)
    dev, test = C.split_dev_test(rest)
    for c, path in ((train, args.train_out), (dev, args.dev_out), (test, args.test_out)):
        C.write_two_column(c, path)
    print(f"train {train.token_count} dev {dev.token_count} test {test.token_count} tokens",
          file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="debias-tagger", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project source tags onto target sentences")
    p.add_argument("--src", required=True, help="source side, token<TAB>tag per line")
    p.add_argument("--tgt", required=True, help="target side, one sentence per line")
    p.add_argument("--align", required=True, help="alignments, i-j pairs per line")
    p.add_argument("--scores", help="one alignment score per sentence")
    p.add_argument("--top-n", type=int, help="keep the N best-scoring sentences")
    p.add_argument("--tagset-src", help="source tagset file (default: universal)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("train", help="two-stage training")
    p.add_argument("--gold-train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--projected", help="projected corpus; omit for gold-only training")
    p.add_argument("--tagset-gold")
    p.add_argument("--tagset-proj")
    p.add_argument("--mapping", help="fine<TAB>universal table applied to gold files")
    p.add_argument("--config", help="key = value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--model-out", required=True)
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="tag whitespace-tokenised sentences")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="one sentence per line")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="per-token accuracy against gold tags")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", help="predicted two-column file")
    p.add_argument("--model", help="tag the gold tokens with this model")
    p.add_argument("--tagset")
    p.add_argument("--mapping")
    p.add_argument("--csv", help="also write a CSV report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-bias", help="write the learned bias matrix as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_bias)

    p = sub.add_parser("synth", help="run the synthetic recovery experiment")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference check of the gradients")
    p.add_argument("--models", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("split", help="first-N-token train split, rest halved into dev/test")
    p.add_argument("--input", required=True)
    p.add_argument("--first-tokens", type=int, default=1000)
    p.add_argument("--tagset")
    p.add_argument("--mapping")
    p.add_argument("--train-out", required=True)
    p.add_argument("--dev-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_split)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (C.CorpusError, ModelFormatError, EvaluationError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
