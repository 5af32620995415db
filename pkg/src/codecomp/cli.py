"""Command-line interface.

One subcommand per invocation. Reports go to stdout (human text by default,
key<TAB>value lines with --format kv); progress logs go to stderr and are
suppressed by --quiet. Configuration precedence is flags, then CODECOMP_*
environment variables, then defaults. Exit codes: 2 for configuration
errors, 3 for data errors, 4 for numeric failures.
"""

import argparse
import logging
import os
import sys

from . import analysis, codec, embeddings, trainer
from .errors import CodecompError, ConfigError, NumericError
from .model import SchemeConfig
from .tensor import new_rng

log = logging.getLogger("codecomp.cli")


def _env_int(name, default):
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"environment variable {name}={raw!r} is not an integer")


def _read_embeddings(path, limit=None):
    """Load a text or binary embedding file, sniffing the binary magic."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
    except OSError as exc:
        raise ConfigError(f"cannot read embeddings: {exc}")
    if magic == embeddings.MATRIX_MAGIC:
        emb = embeddings.read_binary_matrix(path)
        if limit is not None:
            emb = embeddings.EmbeddingMatrix(
                vocab=emb.vocab[:limit], matrix=emb.matrix[:limit]
            )
        return emb
    return embeddings.read_text_embeddings(path, limit=limit)


def _load_recon(args):
    """Reconstruction source for report commands: --recon or --codes/--books."""
    if args.recon:
        return _read_embeddings(args.recon)
    if args.codes and args.books:
        codes, vocab = codec.read_code_file(args.codes)
        books = codec.read_codebook_file(args.books)
        return codec.reconstruct_all(codes, books, vocab)
    raise ConfigError("need either --recon or both --codes and --books")


def _print(text):
    sys.stdout.write(text)


def cmd_train(args):
    emb = _read_embeddings(args.emb, limit=args.limit)
    cfg = SchemeConfig(M=args.M, K=args.K, H=emb.dim, tau=args.tau)
    tc = trainer.TrainConfig(
        scheme=cfg,
        batch_size=args.batch,
        lr=args.lr,
        iterations=args.iters,
        validate_every=min(1000, args.iters) if args.iters > 0 else 1,
        seed=args.seed,
    )
    try:
        params, report = trainer.train(emb, tc)
    except NumericError as exc:
        if exc.params is not None:
            trainer.save_checkpoint(args.out, exc.params, cfg, 0)
            log.error("kept last-good checkpoint at %s", args.out)
        raise
    iteration = report.best_iteration if report.best_iteration is not None else 0
    trainer.save_checkpoint(args.out, params, cfg, iteration)
    pairs = [
        ("iterations_run", report.iterations_run),
        ("best_val_loss", report.best_val_loss),
        ("best_iteration", report.best_iteration),
        ("wall_time_s", round(report.wall_time, 3)),
        ("checkpoint", args.out),
    ]
    if report.val_loss_history:
        pairs.insert(2, ("final_val_loss", report.val_loss_history[-1][1]))
    _print(analysis.format_pairs(pairs, args.format))
    return 0


def cmd_export(args):
    params, cfg, _ = trainer.load_checkpoint(args.checkpoint)
    emb = _read_embeddings(args.emb)
    if emb.dim != cfg.H:
        raise ConfigError(
            f"checkpoint H={cfg.H} does not match embedding dimension {emb.dim}"
        )
    noise_rng = None
    if args.sample_noise_seed is not None:
        noise_rng = new_rng(args.sample_noise_seed)
    codes, books = codec.export_codes(params, emb, cfg, noise_rng=noise_rng)
    codec.write_code_file(args.codes, codes, emb.vocab)
    codec.write_codebook_file(args.books, books)
    _print(analysis.format_pairs(
        [("words", codes.vocab_size), ("M", cfg.M), ("K", cfg.K),
         ("bits_per_word", codes.bits_per_word), ("codes", args.codes),
         ("books", args.books)],
        args.format,
    ))
    return 0


def cmd_reconstruct(args):
    codes, vocab = codec.read_code_file(args.codes)
    books = codec.read_codebook_file(args.books)
    emb = codec.reconstruct_all(codes, books, vocab)
    if args.out_format == "binary":
        embeddings.write_binary_matrix(emb, args.out)
    else:
        embeddings.write_text_embeddings(emb, args.out)
    log.info("wrote %d reconstructed vectors to %s", emb.vocab_size, args.out)
    if args.ref:
        ref = _read_embeddings(args.ref)
        report = analysis.reconstruction_report(ref, emb)
        _print(analysis.format_pairs(list(report.items()), args.format))
    return 0


def cmd_stats(args):
    original = _read_embeddings(args.emb)
    recon = _load_recon(args)
    report = analysis.reconstruction_report(original, recon)
    _print(analysis.format_pairs(list(report.items()), args.format))
    return 0


def cmd_balance(args):
    codes, _ = codec.read_code_file(args.codes)
    table = analysis.balance_table(codes)
    if args.format == "csv":
        _print(table.to_csv())
    else:
        _print(analysis.format_pairs(table.as_pairs(), args.format))
    return 0


def cmd_shared(args):
    codes, vocab = codec.read_code_file(args.codes)
    groups = analysis.shared_code_groups(codes, vocab)
    if args.format == "kv":
        pairs = [("group_count", len(groups))]
        for i, (code, words) in enumerate(groups):
            pairs.append((f"group.{i}.code", "-".join(str(c) for c in code)))
            pairs.append((f"group.{i}.size", len(words)))
            pairs.append((f"group.{i}.words", " ".join(words)))
        _print(analysis.format_pairs(pairs, "kv"))
    else:
        lines = [f"{len(groups)} shared codes"]
        for code, words in groups:
            code_txt = "-".join(str(c) for c in code)
            lines.append(f"  [{code_txt}] x{len(words)}: {' '.join(words)}")
        _print("\n".join(lines) + "\n")
    return 0


def cmd_size(args):
    scheme = SchemeConfig(M=args.M, K=args.K, H=args.H)
    report = analysis.size_report(scheme, args.vocab)
    pairs = report.as_pairs()
    if args.format == "kv":
        _print(analysis.format_pairs(pairs, "kv"))
    else:
        _print(analysis.format_pairs(pairs, "text"))
        _print(
            f"note: binary coding over the same {report.num_vectors} basis vectors "
            f"needs {report.binary_equivalent_bits} bits/word\n"
            "note: sizes are raw uncompressed bytes; MB means 10^6 bytes\n"
        )
    return 0


def cmd_pq(args):
    emb = _read_embeddings(args.emb, limit=args.limit)
    codes, books, loss = analysis.pq_baseline(
        emb, args.M, args.K, iterations=args.iters, seed=args.seed,
        threads=args.threads,
    )
    if args.codes:
        codec.write_code_file(args.codes, codes, emb.vocab)
    if args.books:
        codec.write_codebook_file(args.books, books)
    _print(analysis.format_pairs(
        [("words", emb.vocab_size), ("M", args.M), ("K", args.K),
         ("iterations", args.iters), ("seed", args.seed), ("loss", loss)],
        args.format,
    ))
    return 0


def cmd_nn_overlap(args):
    original = _read_embeddings(args.emb)
    recon = _load_recon(args)
    overlap = analysis.neighbor_overlap(
        original, recon, k=args.k, sample=args.sample, seed=args.seed,
        threads=args.threads,
    )
    _print(analysis.format_pairs(
        [("k", args.k), ("sample", min(args.sample, original.vocab_size)),
         ("overlap", overlap)],
        args.format,
    ))
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress logs on stderr")
    common.add_argument("--format", choices=("text", "kv", "csv"), default="text",
                        help="report format (csv applies to balance only)")

    parser = argparse.ArgumentParser(
        prog="codecomp",
        description="Compress word embeddings into compositional codes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seed_default = _env_int("CODECOMP_SEED", 0)
    threads_default = _env_int("CODECOMP_THREADS", 1)

    p = sub.add_parser("train", parents=[common],
                       help="learn codes for an embedding file")
    p.add_argument("--emb", required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=200_000)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--limit", type=int, default=None,
                   help="use only the first N words")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("export", parents=[common],
                       help="write discrete codes and codebooks from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--codes", required=True, help="code file output path")
    p.add_argument("--books", required=True, help="codebook file output path")
    p.add_argument("--sample-noise-seed", type=int, default=None,
                   help="sample noisy codes instead of the deterministic argmax")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="compose embeddings from codes and codebooks")
    p.add_argument("--codes", required=True)
    p.add_argument("--books", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=("text", "binary"), default="text")
    p.add_argument("--ref", default=None,
                   help="original embeddings; prints a quality report")
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("stats", parents=[common],
                       help="reconstruction quality report")
    p.add_argument("--emb", required=True, help="original embeddings")
    p.add_argument("--recon", default=None, help="reconstructed embedding file")
    p.add_argument("--codes", default=None)
    p.add_argument("--books", default=None)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("balance", parents=[common],
                       help="per-component subcode usage counts")
    p.add_argument("--codes", required=True)
    p.set_defaults(fn=cmd_balance)

    p = sub.add_parser("shared", parents=[common],
                       help="groups of words sharing one code")
    p.add_argument("--codes", required=True)
    p.set_defaults(fn=cmd_shared)

    p = sub.add_parser("size", parents=[common], help="storage accounting")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--H", type=int, default=300,
                   help="embedding dimension for vector storage (default 300)")
    p.add_argument("--vocab", type=int, required=True)
    p.set_defaults(fn=cmd_size)

    p = sub.add_parser("pq", parents=[common],
                       help="product-quantization baseline")
    p.add_argument("--emb", required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--iters", type=int, default=25)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--threads", type=int, default=threads_default)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--codes", default=None, help="optional code file output")
    p.add_argument("--books", default=None, help="optional codebook output")
    p.set_defaults(fn=cmd_pq)

    p = sub.add_parser("nn-overlap", parents=[common],
                       help="shared nearest-neighbor fraction")
    p.add_argument("--emb", required=True, help="original embeddings")
    p.add_argument("--recon", default=None)
    p.add_argument("--codes", default=None)
    p.add_argument("--books", default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--sample", type=int, default=100)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--threads", type=int, default=threads_default)
    p.set_defaults(fn=cmd_nn_overlap)

    return parser


def main(argv=None):
    try:
        parser = build_parser()
    except CodecompError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(message)s",
        force=True,
    )
    try:
        return args.fn(args)
    except CodecompError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
