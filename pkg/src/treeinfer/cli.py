"""Command line interface: ``embed``, ``infer``, ``trace`` and ``experiment``."""

from __future__ import annotations

import argparse
import csv
import functools
import logging
import random
import sys
from pathlib import Path

from .embedding import (
    EmbeddingMode,
    assign_coordinates,
    build_adversarial_tree,
    build_bfs_tree,
    format_coordinate,
    read_coordinates,
    write_coordinates,
)
from .experiment import load_graph, read_config, route_messages, run_sweep
from .knowledge import count_pseudonyms, init_knowledge, observe_coordinate, write_knowledge
from .routing import write_route_log
from .trajectory import (
    build_hypothetical_overlay,
    count_plausible_trajectories,
    enumerate_plausible_trajectories,
    format_trajectory,
    known_trace,
    proven_links,
)


def _id_list(text: str) -> list[int]:
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    return [int(x) for x in text.replace(",", " ").split()]


def _add_graph_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", required=True, help="edge-list file or synthetic:<model>:n=...,seed=...")
    p.add_argument("--mutual-only", action="store_true", help="keep only links listed in both directions")
    p.add_argument("--keep-components", action="store_true",
                   help="do not reduce the graph to its largest connected component")


def _graph(args):
    g = load_graph(args.graph, args.mutual_only, not args.keep_components)
    index = {orig: u for u, orig in enumerate(g.original_ids)}
    return g, index


def _dense(index: dict[int, int], ids, what: str) -> list[int]:
    try:
        return [index[x] for x in ids]
    except KeyError as exc:
        raise SystemExit(f"{what} {exc.args[0]} is not a node of the graph") from None


def _coords(args, g, index):
    raw = read_coordinates(args.coords)
    missing = [orig for orig in g.original_ids if orig not in raw]
    if missing:
        raise SystemExit(f"{args.coords}: no coordinate for node {missing[0]}")
    return [raw[orig] for orig in g.original_ids]


def _knowledge(g, coords, malicious, mode):
    kb = init_knowledge(g, malicious)
    order = sorted(range(g.n), key=lambda v: (len(coords[v]), v))
    for v in order:
        if v in kb.by_binding:
            observe_coordinate(kb, coords[v], observed=v, mode=mode)
    return kb


def cmd_embed(args) -> int:
    g, index = _graph(args)
    rng = random.Random(args.seed)
    root = rng.randrange(g.n) if args.root is None else _dense(index, [args.root], "root")[0]
    mode = EmbeddingMode.parse(args.mode, args.bits)
    if args.malicious:
        bad = _dense(index, _id_list(args.malicious), "malicious node")
        tree = build_adversarial_tree(g, root, bad, rng)
    else:
        tree = build_bfs_tree(g, root, rng)
    coords = assign_coordinates(tree, mode, rng)
    write_coordinates(coords, args.out, ids=g.original_ids)
    print(f"embedded {g.n} nodes from root {g.original_ids[root]}, depth {max(tree.depth)}", file=sys.stderr)
    if tree.fallback:
        print(f"fallback attachment through malicious nodes for {len(tree.fallback)} nodes", file=sys.stderr)
    return 0


def cmd_infer(args) -> int:
    g, index = _graph(args)
    coords = _coords(args, g, index)
    bad = _dense(index, _id_list(args.malicious), "malicious node")
    kb = _knowledge(g, coords, bad, EmbeddingMode.parse(args.mode))
    if args.out_prefix:
        with open(f"{args.out_prefix}.nodes.csv", "w", newline="") as nf, \
                open(f"{args.out_prefix}.links.csv", "w", newline="") as lf:
            write_knowledge(kb, nf, lf)
    else:
        write_knowledge(kb, sys.stdout, sys.stdout)
    print(f"pseudonyms={count_pseudonyms(kb)} known_nodes={len(kb)} known_links={len(kb.e_obs)}",
          file=sys.stderr)
    return 0


def cmd_trace(args) -> int:
    g, index = _graph(args)
    coords = _coords(args, g, index)
    bad = set(_dense(index, _id_list(args.malicious), "malicious node"))
    mode = EmbeddingMode.parse(args.mode)
    kb = _knowledge(g, coords, bad, mode)
    rng = random.Random(args.seed)

    paths, records = route_messages(g, coords, bad, kb, args.messages, rng, mode)
    if args.route_log:
        with open(args.route_log, "w", newline="") as fh:
            write_route_log(paths, fh)

    h = build_hypothetical_overlay(kb)
    ids = g.original_ids
    back = {kid: node.binding for kid, node in kb.nodes.items()}
    show = functools.partial(_show, back, ids)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    dump = open(args.dump_trajectories, "w") if args.dump_trajectories else None
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["msg_id", "m_s", "u_s", "u_e", "m_e", "target", "n_plausible", "truncated", "proven_links"])
        for msg_id, rec in records:
            ktrace = known_trace(kb, rec)
            if dump is not None:
                found = enumerate_plausible_trajectories(h, ktrace, limit=args.limit)
                total, truncated = found.total, found.truncated
                for seq in found:
                    dump.write(f"{msg_id}\t{format_trajectory(h, seq, show)}\n")
            else:
                total, truncated = count_plausible_trajectories(h, ktrace), False
            links = sorted(proven_links(h, ktrace)) if total else []
            shown = ";".join(f"{show(a)}-{show(b)}" for a, b in links)
            w.writerow([msg_id, ids[rec.m_s], ids[rec.u_s], ids[rec.u_e], ids[rec.m_e],
                        format_coordinate(rec.target), total, int(truncated), shown])
    finally:
        if out is not sys.stdout:
            out.close()
        if dump is not None:
            dump.close()
    return 0


def _show(back, ids, kid) -> str:
    binding = back.get(kid)
    return f"P{kid}" if binding is None else str(ids[binding])


def cmd_experiment(args) -> int:
    configs, output = read_config(args.config)
    output = args.output or output
    results = run_sweep(configs, output)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["graph", "mode", "behavior", "n_compromised_target", "runs",
                "mean_compromised", "mean_pseudonyms", "ci99_halfwidth"])
    for r in results:
        w.writerow(r.summary_row())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treeinfer", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="build one embedding and write its coordinates")
    _add_graph_args(p)
    p.add_argument("--mode", default="enum", help="enum or random")
    p.add_argument("--bits", type=int, default=128, help="element width in random mode")
    p.add_argument("--root", type=int, help="root node id (default: random)")
    p.add_argument("--malicious", help="leaf-only attackers, comma list or @file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("infer", help="knowledge snapshot from an embedding")
    _add_graph_args(p)
    p.add_argument("--coords", required=True)
    p.add_argument("--malicious", required=True, help="comma list or @file")
    p.add_argument("--mode", default="enum", help="assignment mode the adversary assumes")
    p.add_argument("--out-prefix", help="write <prefix>.nodes.csv and <prefix>.links.csv")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("trace", help="route random messages and analyse trace records")
    _add_graph_args(p)
    p.add_argument("--coords", required=True)
    p.add_argument("--malicious", required=True, help="comma list or @file")
    p.add_argument("--mode", default="enum")
    p.add_argument("--messages", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="trace record CSV (default stdout)")
    p.add_argument("--route-log", help="CSV of msg_id,hop_index,node_id")
    p.add_argument("--dump-trajectories", help="write plausible trajectories, one per line")
    p.add_argument("--limit", type=int, default=10**6, help="max trajectories dumped per record")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("experiment", help="run an inference study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="override the config's output path")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
