"""Command-line front end: ``lmsmooth <subcommand> ...``.

Every stage reads and writes plain text files (sentences, count files,
model files, reports), and every run that produces artifacts also writes a
``*.manifest.json`` with the configuration and SHA-256 digests of its
inputs and outputs.

Exit codes: 0 ok, 1 usage, 2 data error, 3 non-convergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .baselines import AddKLM, good_turing
from .counts import (CountTable, count_block, freqs, merge_all, read_counts,
                     write_counts, write_freqs)
from .deleted_estimation import DeletedEstimationLM, LambdaModel
from .dirichlet import DirichletLM, DirichletModel
from .evaluation import Comparison, compare, format_probs, score_sample
from .exceptions import LMSmoothError, NonConvergence, OovError
from .textprep import (TokenizerRules, build_samples, join_wrapped_lines,
                       read_sentences, split_blocks, strip_sentence_number,
                       tokenize_sentence, write_sentences)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGENCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: usage error: {message}\n")


def n_threads() -> int:
    raw = os.environ.get("LMSMOOTH_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return min(8, os.cpu_count() or 1)


def _pmap(fn, items):
    items = list(items)
    workers = min(n_threads(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(paths) -> dict:
    out = {}
    for p in paths:
        out[Path(p).name] = _digest(p)
    return dict(sorted(out.items()))


def write_manifest(path, command: str, config: dict, inputs, outputs) -> None:
    payload = {
        "command": command,
        "config": config,
        "inputs": _digests(inputs),
        "outputs": _digests(outputs),
        "version": __version__,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_range(spec: str) -> list[int]:
    """``"0-5"`` or ``"0,2,4-6"`` -> list of ints."""
    out: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out:
        raise UsageError(f"empty index range {spec!r}")
    return out


def _require(paths):
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(p)


def _load_training_counts(args) -> tuple[CountTable, list[str]]:
    if getattr(args, "counts", None):
        _require([f"{args.counts}.tok.counts", f"{args.counts}.bigr.counts"])
        return read_counts(args.counts), [f"{args.counts}.tok.counts", f"{args.counts}.bigr.counts"]
    if not getattr(args, "train", None):
        raise UsageError("give --counts PREFIX or --train FILE...")
    _require(args.train)
    tables = _pmap(lambda p: count_block(read_sentences(p)), args.train)
    return merge_all(tables), list(args.train)


# --- subcommands ------------------------------------------------------------

def cmd_tokenize(args) -> int:
    _require([args.input])
    rules = TokenizerRules(number_token=args.number_token,
                           apostrophe_suffix_split=not args.no_apostrophe_split)
    text = Path(args.input).read_text(encoding="utf-8")
    if args.join_wrapped_lines:
        text = join_wrapped_lines(text)
    out = []
    skipped = 0
    for line in text.splitlines():
        if args.strip_numbering:
            line = strip_sentence_number(line)
        if not line.strip():
            skipped += 1
            continue
        out.append(tokenize_sentence(line, rules))
    write_sentences(args.output, out)
    write_manifest(f"{args.output}.manifest.json", "tokenize",
                   {"join_wrapped_lines": args.join_wrapped_lines,
                    "strip_numbering": args.strip_numbering,
                    "number_token": args.number_token,
                    "apostrophe_suffix_split": not args.no_apostrophe_split,
                    "blank_lines_skipped": skipped},
                   [args.input], [args.output])
    return EXIT_OK


def cmd_split(args) -> int:
    _require([args.input])
    sentences = read_sentences(args.input)
    blocks = split_blocks(sentences, args.blocks)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, blk in enumerate(blocks):
        p = outdir / f"block.{k}.txt"
        write_sentences(p, blk)
        paths.append(p)
    write_manifest(outdir / "split.manifest.json", "split", {"blocks": args.blocks},
                   [args.input], paths)
    return EXIT_OK


def cmd_count(args) -> int:
    _require(args.inputs)
    if args.output:
        tables = _pmap(lambda p: count_block(read_sentences(p)), args.inputs)
        jobs = [(args.output, merge_all(tables))]
    else:
        jobs = list(zip(args.inputs, _pmap(lambda p: count_block(read_sentences(p)), args.inputs)))
    outputs = []
    for prefix, table in jobs:
        outputs.extend(write_counts(table, prefix))
        if args.freqs:
            outputs.extend(write_freqs(freqs(table), prefix))
    manifest = f"{args.output}.counts.manifest.json" if args.output else \
        f"{args.inputs[0]}.counts.manifest.json"
    write_manifest(manifest, "count", {"freqs": args.freqs, "combined": bool(args.output)},
                   args.inputs, outputs)
    return EXIT_OK


def cmd_merge(args) -> int:
    inputs = [f"{p}.{kind}.counts" for p in args.prefixes for kind in ("tok", "bigr")]
    _require(inputs)
    table = merge_all([read_counts(p) for p in args.prefixes])
    outputs = list(write_counts(table, args.output))
    if args.freqs:
        outputs.extend(write_freqs(freqs(table), args.output))
    write_manifest(f"{args.output}.counts.manifest.json", "merge", {"freqs": args.freqs},
                   inputs, outputs)
    return EXIT_OK


def cmd_testprep(args) -> int:
    _require(args.train + args.test)
    training = [s for p in args.train for s in read_sentences(p)]
    test = [s for p in args.test for s in read_sentences(p)]
    samples = build_samples(test, training, keep_first=args.keep_first)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, sents in samples.items():
        p = outdir / f"{name}.txt"
        write_sentences(p, sents)
        paths.append(p)
    config = {"keep_first": args.keep_first}
    config.update({f"{name}_sentences": len(s) for name, s in samples.items()})
    config.update({f"{name}_bigrams": sum(len(x) - 1 for x in s) for name, s in samples.items()})
    write_manifest(outdir / "testprep.manifest.json", "testprep", config,
                   args.train + args.test, paths)
    return EXIT_OK


def _fit_with_warning(fit):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergence)
        model = fit()
    return model, any(issubclass(w.category, NonConvergence) for w in caught)


def cmd_train_de(args) -> int:
    _require(args.blocks)
    tables = _pmap(lambda p: count_block(read_sentences(p)), args.blocks)
    est = DeletedEstimationLM(n_lambdas=args.r, range_max=args.range_max, tol=args.tol,
                              max_iter=args.max_iter)
    est, failed = _fit_with_warning(lambda: est.fit_counts(tables))
    est.model_.save(args.output)
    outputs = [args.output]
    if args.counts_out:
        outputs.extend(write_counts(est.counts_, args.counts_out))
    write_manifest(f"{args.output}.manifest.json", "train de",
                   {"r": args.r, "range_max": args.range_max, "tol": args.tol,
                    "max_iter": args.max_iter, "iterations": est.n_iter_,
                    "converged": est.converged_, "dropped_terms": est.n_dropped_terms_},
                   args.blocks, outputs)
    if failed:
        print(f"lmsmooth: non-convergence: deleted interpolation stopped after "
              f"{est.n_iter_} iterations", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_train_dirichlet(args) -> int:
    counts, inputs = _load_training_counts(args)
    est = DirichletLM(alpha0=args.alpha0, tol=args.tol, max_iter=args.max_iter)
    est, failed = _fit_with_warning(lambda: est.fit_counts(counts))
    est.model_.save(args.output)
    outputs = [args.output]
    if args.counts_out:
        outputs.extend(write_counts(counts, args.counts_out))
    write_manifest(f"{args.output}.manifest.json", "train dirichlet",
                   {"alpha0": args.alpha0, "tol": args.tol, "max_iter": args.max_iter,
                    "iterations": est.n_iter_, "converged": est.converged_,
                    "clamped_u": est.n_clamped_, "alpha": est.alpha_},
                   inputs, outputs)
    if failed:
        print(f"lmsmooth: non-convergence: alpha search stopped after {est.n_iter_} iterations",
              file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_baseline(args) -> int:
    counts, inputs = _load_training_counts(args)
    gt = good_turing(counts)
    gt_path, addk_path = f"{args.output}.goodturing", f"{args.output}.addk"
    gt.save(gt_path)
    with open(addk_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"k {format(args.k, '.15g')}\n")
    write_manifest(f"{args.output}.baseline.manifest.json", "baseline", {"k": args.k},
                   inputs, [gt_path, addk_path])
    return EXIT_OK


def load_model(path, counts: CountTable):
    """Load a model file written by ``train`` or ``baseline``, inferring its kind."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().split()
    if not first:
        raise ValueError(f"{path}: empty model file")
    if first[0] == "alpha":
        return "dirichlet", DirichletLM.from_model(DirichletModel.load(path, counts.vocab), counts)
    if first[0] == "k":
        return "addk", AddKLM(k=float(first[1])).fit_counts(counts)
    return "de", DeletedEstimationLM.from_model(LambdaModel.load(path), counts)


def cmd_eval(args) -> int:
    counts, inputs = _load_training_counts(args)
    _require([args.model] + args.test)
    kind, model = load_model(args.model, counts)
    name = args.name or kind
    reports = []
    for p in args.test:
        sents = read_sentences(p)
        vocab = counts.vocab if args.skip_oov else None
        reports.append(score_sample(model, sents, name, Path(p).stem, vocab=vocab))
        if args.dump_probs:
            dump = f"{args.dump_probs}.{Path(p).stem}.probs" if len(args.test) > 1 else args.dump_probs
            Path(dump).write_text("\n".join(format_probs(model, sents)) + "\n", encoding="utf-8")
    result = Comparison(reports)
    text = result.to_json() if args.format == "json" else result.to_tsv()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        write_manifest(f"{args.output}.manifest.json", "eval",
                       {"format": args.format, "name": name, "skip_oov": args.skip_oov},
                       inputs + [args.model] + args.test, [args.output])
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_model_specs(spec: str) -> list[tuple[str, str, float | None]]:
    out = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, arg = item.partition(":")
        if kind not in ("de", "dirichlet", "addk"):
            raise UsageError(f"unknown model {kind!r}; expected de:R, dirichlet or addk:K")
        out.append((item, kind, float(arg) if arg else None))
    if not out:
        raise UsageError("no models given")
    return out


def cmd_compare(args) -> int:
    blocks_dir = Path(args.blocks_dir)
    train_paths = [blocks_dir / f"block.{k}.txt" for k in parse_range(args.train)]
    test_block_paths = [blocks_dir / f"block.{k}.txt" for k in parse_range(args.test_blocks)]
    if set(train_paths) & set(test_block_paths):
        raise UsageError("training and test blocks overlap")
    _require(train_paths)
    train_blocks = [read_sentences(p) for p in train_paths]
    training = [s for blk in train_blocks for s in blk]
    block_tables = _pmap(count_block, train_blocks)
    counts = merge_all(block_tables)

    samples: dict[str, list] = {}
    inputs = list(train_paths)
    wanted = [t.strip() for t in args.test.split(",") if t.strip()]
    built = None
    for name in wanted:
        if name in ("sample1", "sample2", "sample3"):
            if built is None:
                _require(test_block_paths)
                inputs.extend(test_block_paths)
                test = [s for p in test_block_paths for s in read_sentences(p)]
                built = build_samples(test, training, keep_first=args.keep_first)
            samples[name] = built[name]
        else:
            _require([name])
            inputs.append(name)
            samples[Path(name).stem] = read_sentences(name)

    models = {}
    failed = []
    for label, kind, arg in _parse_model_specs(args.models):
        if kind == "de":
            est = DeletedEstimationLM(n_lambdas=int(arg or 15), range_max=args.range_max,
                                      tol=args.tol, max_iter=args.max_iter)
            est, bad = _fit_with_warning(lambda: est.fit_counts(block_tables))
        elif kind == "dirichlet":
            est = DirichletLM(alpha0=arg or args.alpha0, tol=args.tol, max_iter=args.max_iter)
            est, bad = _fit_with_warning(lambda: est.fit_counts(counts))
        else:
            est, bad = AddKLM(k=arg or 1.0).fit_counts(counts), False
        models[label] = est
        if bad:
            failed.append(label)
    result = compare(models, samples)
    tsv = result.to_tsv()
    outputs = []
    if args.output:
        Path(args.output).write_text(tsv, encoding="utf-8")
        outputs.append(args.output)
    else:
        sys.stdout.write(tsv)
    if args.json:
        Path(args.json).write_text(result.to_json(), encoding="utf-8")
        outputs.append(args.json)
    if not args.quiet:
        sys.stderr.write(result.to_table())
    if outputs:
        write_manifest(f"{outputs[0]}.manifest.json", "compare",
                       {"train": args.train, "test_blocks": args.test_blocks, "test": args.test,
                        "models": args.models, "tol": args.tol, "max_iter": args.max_iter,
                        "range_max": args.range_max, "alpha0": args.alpha0,
                        "keep_first": args.keep_first},
                       inputs, outputs)
    if failed:
        print(f"lmsmooth: non-convergence: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def _add_train_source(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--counts", metavar="PREFIX", help="training count files PREFIX.{tok,bigr}.counts")
    src.add_argument("--train", nargs="+", metavar="FILE", help="tokenized training sentence files")


def _add_fit_options(p, alpha=False, r=False):
    p.add_argument("--tol", type=float, default=5e-9)
    p.add_argument("--max-iter", type=int, default=100)
    if r:
        p.add_argument("--r", type=int, default=15, help="number of lambda buckets")
        p.add_argument("--range-max", type=float, default=0.03)
    if alpha:
        p.add_argument("--alpha0", type=float, default=10.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lmsmooth", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"lmsmooth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tokenize", help="raw text, one sentence per line -> tokenized sentences")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--join-wrapped-lines", action="store_true",
                   help="join lines that start with a space onto the previous line")
    p.add_argument("--strip-numbering", action="store_true",
                   help="drop a leading '12. ' sentence number")
    p.add_argument("--number-token", default="#")
    p.add_argument("--no-apostrophe-split", action="store_true")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("split", help="deal sentences round-robin into blocks")
    p.add_argument("input")
    p.add_argument("--blocks", type=int, default=9)
    p.add_argument("-o", "--output-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("count", help="count tokens and bigrams")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", metavar="PREFIX",
                   help="write one combined table; default is one table per input file")
    p.add_argument("--freqs", action="store_true", help="also write relative frequency files")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("merge", help="merge count tables")
    p.add_argument("prefixes", nargs="+")
    p.add_argument("-o", "--output", required=True, metavar="PREFIX")
    p.add_argument("--freqs", action="store_true")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("testprep", help="build test samples 1-3 from held-out blocks")
    p.add_argument("--train", nargs="+", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--keep-first", action="store_true",
                   help="keep one copy of sentences repeated within the test data")
    p.set_defaults(func=cmd_testprep)

    p = sub.add_parser("train", help="fit a smoothed model")
    tsub = p.add_subparsers(dest="method", required=True, parser_class=_Parser)
    q = tsub.add_parser("de", help="deleted interpolation over training blocks")
    q.add_argument("--blocks", nargs="+", required=True, help="tokenized training block files")
    q.add_argument("-o", "--output", required=True)
    q.add_argument("--counts-out", metavar="PREFIX", help="also write the merged training counts")
    _add_fit_options(q, r=True)
    q.set_defaults(func=cmd_train_de)
    q = tsub.add_parser("dirichlet", help="Dirichlet-prior hyperparameters")
    _add_train_source(q)
    q.add_argument("-o", "--output", required=True)
    q.add_argument("--counts-out", metavar="PREFIX")
    _add_fit_options(q, alpha=True)
    q.set_defaults(func=cmd_train_dirichlet)

    p = sub.add_parser("baseline", help="Good-Turing table and add-k model file")
    _add_train_source(p)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True, metavar="PREFIX")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="perplexity of test files under a model file")
    _add_train_source(p)
    p.add_argument("--model", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("--name")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.add_argument("--skip-oov", action="store_true", help="drop and count OOV sentences")
    p.add_argument("--dump-probs", metavar="FILE", help="write 'prob j i' lines for test bigrams")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train several models and tabulate test perplexities")
    p.add_argument("--blocks-dir", required=True, help="directory written by 'split'")
    p.add_argument("--train", default="0-5", help="training block indices, e.g. 0-5")
    p.add_argument("--test-blocks", default="6-8")
    p.add_argument("--test", default="sample1,sample2,sample3",
                   help="comma-separated sample names (sample1..3) or tokenized files")
    p.add_argument("--models", default="de:15,dirichlet",
                   help="comma-separated: de:R, dirichlet[:ALPHA0], addk[:K]")
    p.add_argument("--keep-first", action="store_true")
    p.add_argument("-o", "--output", help="TSV report (default stdout)")
    p.add_argument("--json", metavar="FILE", help="also write a JSON report")
    p.add_argument("--quiet", action="store_true")
    _add_fit_options(p, alpha=True, r=False)
    p.add_argument("--range-max", type=float, default=0.03)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lmsmooth: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"lmsmooth: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except OovError as exc:
        print(f"lmsmooth: out-of-vocabulary: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LMSmoothError, ValueError, UnicodeDecodeError) as exc:
        print(f"lmsmooth: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
