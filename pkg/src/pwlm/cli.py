"""Command-line surface tying the toolkit together.

Subcommands: split, train, train-vqt, train-codes, sample, guide, score,
eval, inspect. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure. Every command is reproducible from its config file
and seed; reports embed both.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from . import __version__
from .errors import DataError, NumericalError, PwlmError, UsageError


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pwlm",
        description="Character-level password modeling toolkit.")
    ap.add_argument("--version", action="version", version=f"pwlm {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, sampling=False):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, help="master seed override")
        if sampling:
            p.add_argument("--n", type=int, default=10, help="number of samples")
            p.add_argument("--temperature", type=float)
            p.add_argument("--top-k", type=int, dest="top_k")
            p.add_argument("--workers", type=int)
            p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("split", help="shuffle a leak into train/test manifests")
    common(p)
    p.add_argument("--input", required=True, help="leak file")
    p.add_argument("--format", choices=["one-per-line", "pairs"],
                   default="one-per-line")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--out-dir", required=True)

    for name, help_text in (("train", "train a password model"),
                            ("train-vqt", "train a vector-quantized model"),
                            ("train-codes", "train the codes model over a VQT")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.add_argument("--input", required=True, help="leak or manifest file")
        p.add_argument("--format", choices=["one-per-line", "pairs"],
                       default="one-per-line")
        p.add_argument("--max-len", type=int, dest="max_len")
        p.add_argument("--view", choices=["unique", "all-occurrences"])
        p.add_argument("--out", required=True, help="checkpoint path")
        if name == "train-codes":
            p.add_argument("--vqt", required=True, help="trained VQT checkpoint")

    p = sub.add_parser("sample", help="draw passwords from a model")
    common(p, sampling=True)
    p.add_argument("--model", required=True)
    p.add_argument("--codes-model", help="codes checkpoint (when --model is a VQT)")

    p = sub.add_parser("guide", help="template-constrained sampling")
    common(p, sampling=True)
    p.add_argument("--model", required=True)
    p.add_argument("--template", required=True,
                   help="slots: l u d p * , =c literal, \\xHH byte")

    p = sub.add_parser("score", help="log-prob, entropy, and strength per line")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", help="password file (default: stdin)")
    p.add_argument("--out", help="TSV output (default: stdout)")

    p = sub.add_parser("eval", help="guessing-performance report")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True, help="held-out password manifest")
    p.add_argument("--report", required=True, help="report output path")

    p = sub.add_parser("inspect", help="print checkpoint metadata")
    p.add_argument("--model", required=True)
    return p


def cli_dispatch(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse handled --help/--version (code 0) or a usage error
        return 0 if e.code == 0 else 1
    try:
        return _run(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except PwlmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def _run(args) -> int:
    from . import checkpoint, corpus as corpus_mod, evalharness, gpt, guided, vqt
    from .config import load_run_config
    from .textio import escape_bytes, read_password_lines, write_kv, write_password_lines

    overrides = list(getattr(args, "set", []))
    for key in ("seed", "max_len", "train_fraction", "view", "temperature",
                "top_k", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    run = load_run_config(getattr(args, "config", None), overrides)

    if args.command == "split":
        leak = corpus_mod.load_leak(args.input, run.max_len, args.format)
        result = corpus_mod.split_rockyou_style(
            leak, corpus_mod.SplitSpec(run.train_fraction, run.seed))
        os.makedirs(args.out_dir, exist_ok=True)
        train_lines = []
        for pw in sorted(result.train.entries):
            train_lines.extend([pw] * result.train.entries[pw])
        write_password_lines(os.path.join(args.out_dir, "train.txt"), train_lines)
        write_password_lines(os.path.join(args.out_dir, "test.txt"),
                             sorted(result.test))
        stats = result.stats
        write_kv(os.path.join(args.out_dir, "stats.txt"), [
            ("leak", leak.leak_name), ("seed", run.seed),
            ("train_fraction", run.train_fraction),
            ("source_occurrences", stats.source_occurrences),
            ("train_occurrences", stats.train_occurrences),
            ("heldout_occurrences", stats.heldout_occurrences),
            ("test_unique", stats.test_unique),
            ("max_test_frequency", stats.max_test_frequency),
            ("mean_test_frequency", stats.mean_test_frequency),
        ])
        print(f"split written to {args.out_dir}")
        return 0

    if args.command in ("train", "train-vqt", "train-codes"):
        leak = corpus_mod.load_leak(args.input, run.max_len, args.format)
        if args.command == "train":
            model = gpt.train(leak, run.gpt_config(), view=run.view)
        elif args.command == "train-vqt":
            model = vqt.train_vqt(leak, run.vqt_config(), view=run.view)
        else:
            base = checkpoint.load_checkpoint(args.vqt, expect_kind="vqt")
            cfg = vqt.codes_model_config(
                base.cfg, epochs=run.epochs, base_lr=run.base_lr,
                batch_size=run.batch_size, dropout=run.dropout, seed=run.seed)
            model = vqt.train_codes_model(leak, base, cfg, view=run.view)
        checkpoint.save_checkpoint(model, args.out)
        mean = model.train_log["epoch_mean_losses"][-1]
        print(f"trained {model.kind} model -> {args.out} "
              f"(final epoch mean loss {mean:.4f})")
        return 0

    if args.command == "sample":
        model = checkpoint.load_checkpoint(args.model)
        opts = run.sample_opts()
        if model.kind == "vqt":
            if not args.codes_model:
                raise UsageError("sampling a VQT model needs --codes-model")
            codes = checkpoint.load_checkpoint(args.codes_model,
                                               expect_kind="codes")
            pws = vqt.sample_vqt_many(model, codes, args.n, opts)
        elif model.kind == "codes":
            raise UsageError("a codes model samples through its VQT; "
                             "pass the VQT as --model and this as --codes-model")
        else:
            pws = gpt.sample_many(model, args.n, opts)
        _emit_lines(args.out, (escape_bytes(pw) for pw in pws))
        return 0

    if args.command == "guide":
        model = checkpoint.load_checkpoint(args.model, expect_kind="gpt")
        template = guided.parse_template(args.template)
        pws = guided.guided_sample_many(model, template, args.n, run.sample_opts())
        _emit_lines(args.out, (escape_bytes(pw) for pw in pws))
        return 0

    if args.command == "score":
        model = checkpoint.load_checkpoint(args.model)
        if model.kind == "vqt":
            raise UsageError("scoring needs an autoregressive model checkpoint")
        if args.infile:
            passwords = read_password_lines(args.infile)
        else:
            passwords = [line.rstrip("\n").encode() for line in sys.stdin
                         if line.rstrip("\n")]
        from .strength import estimate_strength
        lines = ["password\tlog10_prob\tstrength\tentropy_bits"]
        lps = gpt.log_prob_many(model, passwords)
        for pw, lp in zip(passwords, lps):
            ent = gpt.entropy_profile(model, pw)
            score = estimate_strength(pw).score
            ent_s = ",".join(repr(round(float(e), 6)) for e in ent)
            lines.append(f"{escape_bytes(pw)}\t{lp!r}\t{score}\t{ent_s}")
        _emit_lines(args.out, lines)
        return 0

    if args.command == "eval":
        model = checkpoint.load_checkpoint(args.model, expect_kind="gpt")
        test = set(read_password_lines(args.test))
        budgets = run.budget_list()
        opts = run.sample_opts()
        guesses = gpt.sample_many(model, budgets[-1], opts)
        report = evalharness.EvalReport(metadata={
            "model": args.model, "test": args.test, "seed": run.seed,
            "budgets": run.budgets, "temperature": run.temperature,
        })
        for budget in budgets:
            pool = evalharness.GuessPool(source="model").add_many(guesses[:budget])
            report.match_rates.append(
                ("model", budget, evalharness.match_rate(pool, test)))
        report.uniqueness = evalharness.uniqueness_curve(guesses, budgets)
        full_pool = evalharness.GuessPool(source="model").add_many(guesses)
        report.bucket_rows = evalharness.strength_bucketed_matches(
            test, {"model": full_pool})
        ordered = sorted(test)
        lps = gpt.log_prob_many(model, ordered)
        scored2 = list(zip(ordered, lps.tolist()))
        report.quantiles = evalharness.quantile_passwords(
            scored2, run.quantile_list(), run.quantile_length)
        ents = [float(gpt.entropy_profile(model, pw).mean()) for pw in ordered]
        report.alignment = evalharness.strength_alignment(
            [(pw, lp, e) for (pw, lp), e in zip(scored2, ents)],
            low_percentile=run.low_percentile,
            high_percentile=run.high_percentile)
        report.write(args.report)
        print(f"report written to {args.report}")
        return 0

    if args.command == "inspect":
        kind, config_text, shapes = checkpoint.read_metadata(args.model)
        print(f"kind={kind}")
        print(f"format_version={checkpoint.VERSION}")
        for line in config_text.splitlines():
            print(f"config.{line}")
        total = 0
        for name, shape in shapes.items():
            count = 1
            for s in shape:
                count *= s
            total += count
            print(f"param.{name}={'x'.join(map(str, shape))}")
        print(f"total_parameters={total}")
        return 0

    raise UsageError(f"unknown command {args.command!r}")


def _emit_lines(out_path, lines) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
    else:
        for line in lines:
            print(line)


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
