"""Command-line driver: ``mlstm <subcommand> [options]``.

Option values come from built-in defaults, then a JSON ``--config`` file,
then explicit flags (later wins). Paths inside a config file are relative
to the file's directory.

Exit codes: 0 success, 1 runtime failure, 2 unknown subcommand,
3 missing or invalid option, 4 unreadable input file, 5 malformed input.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .analysis import cluster_report, dbscan, embed_users, export_embeddings, read_embeddings
from .detection import (EARLY_COLUMNS, BATCH_COLUMNS, TAU_GRID, DetectionConfig,
                        batch_table_rows, early_table_rows, format_table, format_tsv,
                        predict_user, stream_sweep, stream_user, threshold_sweep)
from .embeddings import WordVectorStore, load_word_vector_file
from .errors import CheckpointError, LabelError, MlstmError, ParseError
from .ingestion import (SYNTH_CUTOFF, build_aspect_sequences, chronological_split,
                        filter_meta_edits, gen_synthetic, group_into_user_sequences,
                        read_edit_log, read_labels, synthetic_vocabulary, write_edit_log,
                        write_labels, write_word_vectors)
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

log = logging.getLogger("mlstm")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_UNKNOWN_COMMAND = 2
EXIT_USAGE = 3
EXIT_UNREADABLE = 4
EXIT_BAD_INPUT = 5


class UsageError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# (flag, dest, type, default, required, help); type "path" is a str resolved against the config dir.
COMMON = [
    ("--seed", "seed", int, 0, False, "seed for all randomness"),
    ("--config", "config", str, None, False, "JSON file of option overrides"),
]

COMMANDS = {
    "synth": ("generate a synthetic edit log, labels and word vectors", [
        ("--users", "users", int, 400, False, "number of users"),
        ("--mean-edits", "mean_edits", float, 8.0, False, "mean edits per user"),
        ("--separability", "separability", float, 1.0, False, "class separability in [0, 1]"),
        ("--dim", "dim", int, 50, False, "word vector dimension"),
        ("--out", "out", "path", None, True, "output directory"),
    ]),
    "train": ("train a model and write a checkpoint", [
        ("--edits", "edits", "path", None, True, "edit log (JSON lines)"),
        ("--labels", "labels", "path", None, True, "labels TSV"),
        ("--vectors", "vectors", "path", None, False, "word vector text file"),
        ("--dim", "dim", int, 50, False, "word vector dimension"),
        ("--epochs", "epochs", int, 25, False, "training epochs"),
        ("--hidden", "hidden", int, 32, False, "LSTM hidden size"),
        ("--clip", "clip", float, 5.0, False, "global gradient-norm clip (inf disables)"),
        ("--shuffle", "shuffle", bool, False, False, "shuffle users every epoch"),
        ("--cutoff", "cutoff", float, None, False, "train only on users first active at or before this UTC time"),
        ("--history", "history", "path", None, False, "write per-epoch loss/accuracy TSV"),
        ("--out", "out", "path", None, True, "checkpoint path"),
    ]),
    "eval": ("batch evaluation at one or several thresholds", [
        ("--ckpt", "ckpt", "path", None, True, "checkpoint"),
        ("--edits", "edits", "path", None, True, "edit log"),
        ("--labels", "labels", "path", None, True, "labels TSV"),
        ("--vectors", "vectors", "path", None, False, "override the checkpoint's word vector file"),
        ("--tau", "tau", float, 0.5, False, "decision threshold"),
        ("--sweep", "sweep", bool, False, False, "report tau in 0.5..0.9"),
        ("--cutoff", "cutoff", float, None, False, "evaluate only users first active after this time"),
        ("--report", "report", "path", None, False, "write metrics TSV"),
    ]),
    "stream": ("streaming early detection", [
        ("--ckpt", "ckpt", "path", None, True, "checkpoint"),
        ("--edits", "edits", "path", None, True, "edit log"),
        ("--labels", "labels", "path", None, False, "labels TSV (enables metrics)"),
        ("--vectors", "vectors", "path", None, False, "override the checkpoint's word vector file"),
        ("--tau", "tau", float, 0.5, False, "decision threshold"),
        ("--sweep", "sweep", bool, False, False, "report tau in 0.5..0.9"),
        ("--cutoff", "cutoff", float, None, False, "stream only users first active after this time"),
        ("--min-edits", "min_edits", int, 2, False, "skip users with fewer edits"),
        ("--report", "report", "path", None, True, "per-user TSV"),
    ]),
    "cluster": ("DBSCAN over exported embeddings", [
        ("--embeddings", "embeddings", "path", None, True, "embedding TSV from export"),
        ("--eps", "eps", float, 0.05, False, "neighbourhood radius"),
        ("--min-pts", "min_pts", int, 3, False, "minimum neighbourhood size"),
        ("--out", "out", "path", None, False, "cluster report TSV"),
    ]),
    "export": ("write user embeddings as TSV", [
        ("--ckpt", "ckpt", "path", None, True, "checkpoint"),
        ("--edits", "edits", "path", None, True, "edit log"),
        ("--labels", "labels", "path", None, False, "labels TSV"),
        ("--vectors", "vectors", "path", None, False, "override the checkpoint's word vector file"),
        ("--cutoff", "cutoff", float, None, False, "export only users first active after this time"),
        ("--out", "out", "path", None, True, "output TSV"),
    ]),
}


def _usage():
    lines = ["usage: mlstm [--version] [-v] <command> [options]", "", "commands:"]
    lines += [f"  {name:<8} {desc}" for name, (desc, _) in COMMANDS.items()]
    return "\n".join(lines)


def _build_parser(command):
    desc, options = COMMANDS[command]
    parser = _Parser(prog=f"mlstm {command}", description=desc, argument_default=argparse.SUPPRESS)
    for flag, dest, typ, default, required, help_ in options + COMMON:
        extra = f" (default: {default})" if default is not None else ""
        if typ is bool:
            parser.add_argument(flag, dest=dest, action="store_true", help=help_)
        else:
            parser.add_argument(flag, dest=dest, type=str if typ == "path" else typ,
                                help=help_ + (" [required]" if required else extra))
    return parser


def _load_config(path, command):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON config: {exc}", source=path) from None
    if not isinstance(data, dict):
        raise ParseError("config must be a JSON object", source=path)
    known = {o[1] for _, opts in COMMANDS.values() for o in opts} | {"seed"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise UsageError(f"unknown config keys in {path}: {', '.join(unknown)}")
    options = {o[1]: o for o in COMMANDS[command][1] + COMMON}
    base = os.path.dirname(os.path.abspath(path))
    out = {}
    for key, value in data.items():
        if key not in options:
            continue
        typ = options[key][2]
        if value is None:
            pass
        elif typ == "path":
            value = os.path.join(base, value)
        else:
            try:
                value = typ(value) if typ is not bool or isinstance(value, bool) else None
            except (TypeError, ValueError):
                value = None
            if value is None:
                raise UsageError(f"config key {key!r} in {path} has an invalid value")
        out[key] = value
    return out


def resolve_options(command, argv):
    parser = _build_parser(command)
    flags = vars(parser.parse_args(argv))
    options = COMMANDS[command][1] + COMMON
    merged = {o[1]: o[3] for o in options}
    if flags.get("config"):
        merged.update(_load_config(flags["config"], command))
    merged.update(flags)
    missing = [o[0] for o in options if o[4] and merged.get(o[1]) is None]
    if missing:
        raise UsageError(f"mlstm {command}: missing required option(s): {', '.join(missing)}")
    return argparse.Namespace(**merged)


# --- shared loading -------------------------------------------------------

def _load_users(edits_path, labels_path):
    records = filter_meta_edits(read_edit_log(edits_path))
    labels = read_labels(labels_path) if labels_path else None
    return group_into_user_sequences(records, labels)


def _store_for(ckpt, opts):
    meta = ckpt.metadata
    dim = int(meta.get("word_dim", ckpt.params.input_dims[0]))
    seed = int(meta.get("oov_seed", 0))
    path = opts.vectors or meta.get("vectors")
    if path:
        return load_word_vector_file(path, dim, seed=seed)
    return WordVectorStore(dim, seed=seed)


def _select_test(users, cutoff):
    if cutoff is None:
        return users
    return chronological_split(users, cutoff)[1]


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --- subcommands ----------------------------------------------------------

def cmd_synth(opts):
    os.makedirs(opts.out, exist_ok=True)
    users = gen_synthetic(opts.users, opts.mean_edits, opts.separability, opts.seed)
    write_edit_log([e for u in users for e in u.edits], os.path.join(opts.out, "edits.jsonl"))
    write_labels({u.user_id: u.label for u in users}, os.path.join(opts.out, "labels.tsv"))
    write_word_vectors(synthetic_vocabulary(opts.dim, opts.seed), os.path.join(opts.out, "vectors.txt"))
    config = {"edits": "edits.jsonl", "labels": "labels.tsv", "vectors": "vectors.txt",
              "dim": opts.dim, "cutoff": SYNTH_CUTOFF}
    _write_text(os.path.join(opts.out, "config.json"), json.dumps(config, indent=2, sort_keys=True) + "\n")
    n_edits = sum(u.T for u in users)
    print(f"wrote {len(users)} users, {n_edits} edits to {opts.out}")
    return EXIT_OK


def cmd_train(opts):
    users = _load_users(opts.edits, opts.labels)
    if opts.cutoff is not None:
        users = chronological_split(users, opts.cutoff)[0]
    if opts.vectors:
        store = load_word_vector_file(opts.vectors, opts.dim, seed=opts.seed)
    else:
        store = WordVectorStore(opts.dim, seed=opts.seed)
    dataset = [build_aspect_sequences(u, store) for u in users]
    cfg = TrainConfig(epochs=opts.epochs, hidden=opts.hidden, word_dim=opts.dim, seed=opts.seed,
                      clip_norm=opts.clip, shuffle=opts.shuffle)
    params, history = train(dataset, cfg)
    metadata = {"word_dim": opts.dim, "oov_seed": opts.seed, "vectors": opts.vectors,
                "aspects": ["title", "category", "revert"], "epochs": opts.epochs}
    save_checkpoint(params, opts.out, metadata=metadata)
    if opts.history:
        rows = [(i + 1, loss, acc) for i, (loss, acc) in enumerate(zip(history.loss, history.accuracy))]
        _write_text(opts.history, format_tsv(("epoch", "loss", "accuracy"), rows))
    print(f"trained on {len(dataset)} users for {cfg.epochs} epochs; "
          f"final loss {history.loss[-1]:.6f}, train accuracy {history.accuracy[-1]:.4f}")
    print(f"checkpoint written to {opts.out}")
    return EXIT_OK


def cmd_eval(opts):
    ckpt = load_checkpoint(opts.ckpt)
    store = _store_for(ckpt, opts)
    users = _select_test(_load_users(opts.edits, opts.labels), opts.cutoff)
    probs = [predict_user(ckpt.params, build_aspect_sequences(u, store))[0] for u in users]
    labels = [u.label for u in users]
    taus = TAU_GRID if opts.sweep else (DetectionConfig(opts.tau).tau,)
    rows = batch_table_rows(threshold_sweep(probs, labels, taus))
    print(f"evaluated {len(users)} users")
    sys.stdout.write(format_table(BATCH_COLUMNS, rows, percent=BATCH_COLUMNS[1:]))
    if opts.report:
        _write_text(opts.report, format_tsv(BATCH_COLUMNS, rows))
    return EXIT_OK


def cmd_stream(opts):
    ckpt = load_checkpoint(opts.ckpt)
    store = _store_for(ckpt, opts)
    cfg = DetectionConfig(opts.tau)
    users = _select_test(_load_users(opts.edits, opts.labels), opts.cutoff)
    users = [u for u in users if u.T >= opts.min_edits]
    results = [stream_user(u, ckpt.params, store, cfg) for u in users]
    lines = ["user_id\tlabel\tedits\tflagged_at\tfinal_prob\tmax_prob"]
    for r in results:
        at = r.flagged_at(cfg.tau)
        lines.append(f"{r.user_id}\t{r.label or ''}\t{r.T}\t{'' if at is None else at}\t"
                     f"{r.probs[-1]:.17g}\t{max(r.probs):.17g}")
    _write_text(opts.report, "\n".join(lines) + "\n")
    n_flagged = sum(r.flagged_at(cfg.tau) is not None for r in results)
    print(f"streamed {len(results)} users; {n_flagged} flagged at tau={cfg.tau:g}")
    if opts.labels:
        taus = TAU_GRID if opts.sweep else (cfg.tau,)
        rows = early_table_rows(stream_sweep(results, taus))
        sys.stdout.write(format_table(EARLY_COLUMNS, rows,
                                      percent=("precision", "recall", "f1", "early_detected")))
    return EXIT_OK


def cmd_cluster(opts):
    points = read_embeddings(opts.embeddings)
    result = dbscan(points, opts.eps, opts.min_pts)
    for key, value in result.summary().items():
        print(f"{key}\t{value}")
    if opts.out:
        _write_text(opts.out, cluster_report(result))
    return EXIT_OK


def cmd_export(opts):
    ckpt = load_checkpoint(opts.ckpt)
    store = _store_for(ckpt, opts)
    users = _select_test(_load_users(opts.edits, opts.labels), opts.cutoff)
    points = embed_users(ckpt.params, [build_aspect_sequences(u, store) for u in users])
    n = export_embeddings(points, opts.out)
    print(f"exported {n} embeddings to {opts.out}")
    return EXIT_OK


HANDLERS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "stream": cmd_stream,
            "cluster": cmd_cluster, "export": cmd_export}


def run(args):
    """Run one CLI invocation and return its exit code."""
    args = list(args)
    verbose = False
    while args and args[0] in ("-v", "--verbose"):
        verbose = True
        args.pop(0)
    if args and args[0] == "--version":
        print(f"mlstm {__version__}")
        return EXIT_OK
    if not args or args[0] in ("-h", "--help"):
        print(_usage(), file=sys.stderr if not args else sys.stdout)
        return EXIT_OK if args else EXIT_UNKNOWN_COMMAND
    command, rest = args[0], args[1:]
    if command not in COMMANDS:
        print(f"mlstm: unknown command {command!r}\n{_usage()}", file=sys.stderr)
        return EXIT_UNKNOWN_COMMAND
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(command, rest)
        return HANDLERS[command](opts)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"mlstm {command}: cannot access {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_UNREADABLE
    except (ParseError, LabelError, CheckpointError) as exc:
        print(f"mlstm {command}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (MlstmError, ValueError) as exc:
        print(f"mlstm {command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
