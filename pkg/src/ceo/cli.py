"""``ceo <subcommand> --config PATH [--output DIR] [--seed INT]``.

Exit status: 0 on success, 1 on usage or configuration errors, 2 on data errors.
"""

import argparse
import os
import sys

from . import pipeline
from .errors import CEOError, ConfigError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _run(cfg):
    metrics = pipeline.run_pipeline(cfg)
    print(pipeline.render_report(metrics), end="")


def _label(cfg):
    print(pipeline.run_label_salience(cfg))


def _refine(cfg):
    table = pipeline.run_refine(cfg)
    print(f"encoded {len(table)} events into {table.dim} dimensions")


def _cluster(cfg):
    d = pipeline.run_cluster(cfg)
    print(f"clustered {d.n_leaves} leaves with {d.n_merges} merges")


def _name(cfg):
    names, paths = pipeline.run_name(cfg)
    print(f"named {len(names)} nodes; {len(paths)} type paths")


def _evaluate(cfg):
    print(pipeline.render_report(pipeline.run_evaluate(cfg)), end="")


COMMANDS = {
    "run": (_run, "run the full pipeline"),
    "label-salience": (_label, "label body events salient by summary alignment"),
    "refine": (_refine, "train the taxonomy-guided autoencoder and write latent vectors"),
    "cluster": (_cluster, "build a dendrogram from event or latent vectors"),
    "name": (_name, "name dendrogram nodes and write type paths"),
    "evaluate": (_evaluate, "score a merge list against gold labels"),
}


def build_parser():
    parser = _Parser(prog="ceo", description="Event ontology induction from event embeddings.")
    sub = parser.add_subparsers(dest="command", metavar="<subcommand>", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, metavar="PATH", help="key = value config file")
        p.add_argument("--output", metavar="DIR", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, metavar="INT", help="random seed (overrides seed)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.output is not None:
        overrides["output_dir"] = os.path.abspath(args.output)
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = pipeline.load_config(args.config, overrides)
        COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        print(f"ceo: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CEOError as exc:
        print(f"ceo: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
