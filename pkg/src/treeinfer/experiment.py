"""Inference study harness: malicious set selection, simulation runs, aggregation."""

from __future__ import annotations

import configparser
import csv
import enum
import hashlib
import logging
import math
import os
import random
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .embedding import (
    Coord,
    EmbeddingMode,
    SpanningTree,
    assign_coordinates,
    build_adversarial_tree,
    build_bfs_tree,
)
from .knowledge import KnowledgeBase, count_pseudonyms, init_knowledge, observe_coordinate
from .overlay import OverlayGraph, generate_synthetic, largest_connected_component, load_edge_list
from .routing import extract_trace_records, route

log = logging.getLogger(__name__)

__all__ = [
    "Behavior",
    "MaliciousSelection",
    "Simulation",
    "ExperimentConfig",
    "RunRecord",
    "ExperimentResult",
    "SelectionError",
    "derive_seed",
    "load_graph",
    "select_malicious_set",
    "run_embedding_simulation",
    "run_experiment",
    "run_sweep",
    "read_config",
    "write_results",
    "CSV_COLUMNS",
    "TraceScenario",
    "route_messages",
    "run_trace_scenario",
]

CSV_COLUMNS = [
    "graph",
    "mode",
    "behavior",
    "n_compromised_target",
    "set_index",
    "run_index",
    "n_compromised_actual",
    "n_pseudonyms",
]
SUMMARY_COLUMNS = [
    "graph",
    "mode",
    "behavior",
    "n_compromised_target",
    "runs",
    "mean_compromised",
    "mean_pseudonyms",
    "ci99_halfwidth",
]
Z99 = statistics.NormalDist().inv_cdf(0.995)


class SelectionError(RuntimeError):
    pass


class Behavior(str, enum.Enum):
    HONEST = "honest"
    LEAF_ONLY = "leaf-only"

    @classmethod
    def parse(cls, text: str) -> "Behavior":
        key = text.strip().lower().replace("_", "-")
        if key in ("leaf", "leafonly"):
            key = "leaf-only"
        return cls(key)


def derive_seed(*parts) -> int:
    """64-bit seed from a path of labels, stable across processes and platforms."""
    text = "/".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


# -- graph sources -------------------------------------------------------------


def load_graph(source: str, mutual_only: bool = False, largest_component: bool = True) -> OverlayGraph:
    """Load ``source``: an edge-list path or ``synthetic:<model>:key=value,...``.

    Synthetic specs accept ``n``, ``seed`` and the model's own parameters, for
    example ``synthetic:scale-free:n=10000,m=2,seed=1``.
    """
    if source.startswith("synthetic:"):
        _, model, *rest = source.split(":", 2)
        params: dict[str, str] = {}
        for item in (rest[0].split(",") if rest and rest[0] else []):
            key, _, value = item.partition("=")
            params[key.strip()] = value.strip()
        n = int(params.pop("n", 1000))
        seed = int(params.pop("seed", 0))
        g = generate_synthetic(model, n, seed=seed, **params)
    else:
        g = load_edge_list(source, mutual_only=mutual_only)
    return largest_connected_component(g) if largest_component else g


def graph_label(source: str) -> str:
    if source.startswith("synthetic:"):
        return source[len("synthetic:"):]
    name = Path(source).name
    for suffix in (".gz", ".txt", ".edges", ".csv"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


# -- malicious sets ----------------------------------------------------------


@dataclass(frozen=True)
class MaliciousSelection:
    malicious: frozenset[int]
    n_compromised: int
    restarts: int


def select_malicious_set(
    g: OverlayGraph,
    n_compromised: int,
    rng: random.Random,
    max_restarts: int = 200,
    tolerance: float = 0.05,
) -> MaliciousSelection:
    """Add uniformly random nodes to M until ``|N(M) \\ M|`` reaches ``n_compromised``.

    An overshoot restarts the growth. When no attempt hits the target exactly,
    the closest set seen during any growth is accepted if its relative
    deviation is within ``tolerance``.
    """
    n = g.n
    if n_compromised < 1 or n_compromised >= n:
        raise SelectionError(f"cannot compromise {n_compromised} nodes in a graph of {n}")
    # (count, attempt, order, prefix length); positions before the prefix end
    # are never swapped again, so the order list can be kept by reference
    best: tuple[int, int, list[int], int] | None = None

    for attempt in range(max_restarts):
        order = list(range(n))
        members: set[int] = set()
        comp: set[int] = set()
        for i in range(n):
            j = rng.randrange(i, n)
            order[i], order[j] = order[j], order[i]
            x = order[i]
            members.add(x)
            comp.discard(x)
            comp.update(y for y in g.adjacency[x] if y not in members)
            count = len(comp)
            if count == n_compromised:
                return MaliciousSelection(frozenset(members), n_compromised, attempt)
            if count and (best is None or abs(count - n_compromised) < abs(best[0] - n_compromised)):
                best = (count, attempt, order, i + 1)
            if count > n_compromised:
                break
    if best is None:
        raise SelectionError(f"no malicious set compromises any node in a graph of {n}")
    count, attempt, order, size = best
    if abs(count - n_compromised) > tolerance * n_compromised:
        raise SelectionError(
            f"wanted {n_compromised} compromised nodes, closest achieved was {count} "
            f"after {max_restarts} restarts"
        )
    return MaliciousSelection(frozenset(order[:size]), count, attempt)


# -- single run ----------------------------------------------------------------


@dataclass
class Simulation:
    kb: KnowledgeBase
    n_pseudonyms: int
    root: int
    tree: SpanningTree
    coords: list[Coord]

    @property
    def fallback(self) -> bool:
        return bool(self.tree.fallback)


def run_embedding_simulation(
    g: OverlayGraph,
    malicious: Iterable[int],
    mode: EmbeddingMode,
    behavior: Behavior,
    rng: random.Random,
    include_malicious_coords: bool = True,
    literal_metric: bool = False,
    root: int | None = None,
) -> Simulation:
    """Embed ``g`` from a random root and let the adversary infer from announced coordinates.

    Coordinate announcements are processed in the order nodes joined the tree.
    Every compromised node's coordinate is observed; each malicious node's own
    coordinate is too unless ``include_malicious_coords`` is off. ``root``
    pins the tree root instead of drawing it.
    """
    bad = frozenset(malicious)
    if root is None:
        root = rng.randrange(g.n)
    if behavior is Behavior.LEAF_ONLY and bad:
        tree = build_adversarial_tree(g, root, bad, rng)
    else:
        tree = build_bfs_tree(g, root, rng)
    coords = assign_coordinates(tree, mode, rng)
    kb = init_knowledge(g, bad)
    for v in tree.order:
        if v in kb.by_binding and (include_malicious_coords or v not in bad):
            observe_coordinate(kb, coords[v], observed=v, mode=mode)
    return Simulation(kb, count_pseudonyms(kb, literal=literal_metric), root, tree, coords)


# -- experiments ---------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    graph: str
    mode: EmbeddingMode = field(default_factory=EmbeddingMode.enumeration)
    behavior: Behavior = Behavior.HONEST
    n_compromised: int = 200
    num_sets: int = 20
    runs_per_set: int = 50
    master_seed: int = 0
    output: str | None = None
    mutual_only: bool = False
    largest_component: bool = True
    include_malicious_coords: bool = True
    literal_metric: bool = False

    def __post_init__(self):
        if self.num_sets < 1 or self.runs_per_set < 1:
            raise ValueError("num_sets and runs_per_set must be at least 1")
        if self.n_compromised < 1:
            raise ValueError("n_compromised must be positive")

    @property
    def label(self) -> str:
        return graph_label(self.graph)


@dataclass(frozen=True)
class RunRecord:
    set_index: int
    run_index: int
    n_compromised: int
    n_pseudonyms: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunRecord]

    @property
    def values(self) -> list[int]:
        return [r.n_pseudonyms for r in self.runs]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.values)

    @property
    def ci99(self) -> float:
        """Half-width of the normal-approximation 99% confidence interval of the mean."""
        v = self.values
        if len(v) < 2:
            return 0.0
        return Z99 * statistics.stdev(v) / math.sqrt(len(v))

    @property
    def compromised_per_set(self) -> dict[int, int]:
        return {r.set_index: r.n_compromised for r in self.runs}

    def rows(self) -> Iterable[list]:
        c = self.config
        for r in self.runs:
            yield [c.label, c.mode.label, c.behavior.value, c.n_compromised,
                   r.set_index, r.run_index, r.n_compromised, r.n_pseudonyms]

    def summary_row(self) -> list:
        c = self.config
        mean_comp = statistics.fmean(r.n_compromised for r in self.runs)
        return [c.label, c.mode.label, c.behavior.value, c.n_compromised, len(self.runs),
                f"{mean_comp:.2f}", f"{self.mean:.4f}", f"{self.ci99:.4f}"]


_graph_cache: dict[tuple, OverlayGraph] = {}
_selection_cache: dict[tuple, MaliciousSelection] = {}


def _graph_for(config: ExperimentConfig) -> OverlayGraph:
    key = (config.graph, config.mutual_only, config.largest_component)
    g = _graph_cache.get(key)
    if g is None:
        g = _graph_cache[key] = load_graph(config.graph, config.mutual_only, config.largest_component)
    return g


def _selection_for(config: ExperimentConfig, g: OverlayGraph, set_index: int) -> MaliciousSelection:
    key = (config.graph, config.mutual_only, config.largest_component,
           config.master_seed, config.n_compromised, set_index)
    sel = _selection_cache.get(key)
    if sel is None:
        rng = random.Random(derive_seed(config.master_seed, "set", config.n_compromised, set_index))
        sel = _selection_cache[key] = select_malicious_set(g, config.n_compromised, rng)
    return sel


def run_experiment(config: ExperimentConfig, graph: OverlayGraph | None = None) -> ExperimentResult:
    """All sets and runs of one configuration.

    Seeds depend only on the master seed, the compromised-node target and the
    set/run indexes, so configurations differing in mode or behavior are
    evaluated on identical malicious sets and identical run seeds.
    """
    g = graph if graph is not None else _graph_for(config)
    runs = []
    for set_index in range(config.num_sets):
        if graph is None:
            sel = _selection_for(config, g, set_index)
        else:
            rng = random.Random(derive_seed(config.master_seed, "set", config.n_compromised, set_index))
            sel = select_malicious_set(g, config.n_compromised, rng)
        for run_index in range(config.runs_per_set):
            rng = random.Random(
                derive_seed(config.master_seed, "run", config.n_compromised, set_index, run_index)
            )
            sim = run_embedding_simulation(
                g, sel.malicious, config.mode, config.behavior, rng,
                include_malicious_coords=config.include_malicious_coords,
                literal_metric=config.literal_metric,
            )
            runs.append(RunRecord(set_index, run_index, sel.n_compromised, sim.n_pseudonyms))
        log.info("%s %s %s N_C=%d set %d done", config.label, config.mode.label,
                 config.behavior.value, config.n_compromised, set_index)
    result = ExperimentResult(config, runs)
    if config.output:
        write_results([result], config.output)
    return result


def run_sweep(configs: Sequence[ExperimentConfig], output: str | None = None) -> list[ExperimentResult]:
    results = [run_experiment(replace(c, output=None)) for c in configs]
    if output:
        write_results(results, output)
    return results


def _header(results: Sequence[ExperimentResult]) -> list[str]:
    lines = ["# seeds: set_rng=sha256(master_seed/set/n_compromised_target/set_index)[:8]",
             "# seeds: run_rng=sha256(master_seed/run/n_compromised_target/set_index/run_index)[:8]"]
    seen = set()
    for r in results:
        c = r.config
        key = (c.graph, c.master_seed)
        if key not in seen:
            seen.add(key)
            lines.append(f"# graph={c.graph} master_seed={c.master_seed} mutual_only={c.mutual_only} "
                         f"largest_component={c.largest_component}")
    return lines


def write_results(results: Sequence[ExperimentResult], path) -> Path:
    """Per-run CSV at ``path`` plus aggregates in ``<stem>.summary.csv``; returns the summary path."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in _header(results):
                fh.write(line + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in results:
                w.writerows(r.rows())
        summary = path.with_name(path.stem + ".summary.csv")
        with open(summary, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for r in results:
                w.writerow(r.summary_row())
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return summary


# -- config files ------------------------------------------------------------

_BOOL_KEYS = ("mutual_only", "largest_component", "include_malicious_coords", "literal_metric")


def _as_bool(text: str) -> bool:
    key = text.strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def read_config(path) -> tuple[list[ExperimentConfig], str | None]:
    """Parse a flat ``key = value`` experiment file.

    ``mode``, ``behavior`` and ``n_compromised`` may list several
    comma-separated values; the cross product is returned together with the
    shared ``output`` path. A relative graph path is resolved against the
    config file's directory.
    """
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string("[experiment]\n" + text, source=str(path))
    sec = dict(parser["experiment"])
    known = {"graph", "mode", "bits", "behavior", "n_compromised", "num_sets", "runs_per_set",
             "master_seed", "output", *_BOOL_KEYS}
    unknown = set(sec) - known
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    if "graph" not in sec:
        raise ValueError(f"{path}: 'graph' is required")
    graph = sec["graph"]
    if not graph.startswith("synthetic:") and not os.path.isabs(graph):
        graph = str((Path(path).parent / graph).resolve())
    bits = int(sec.get("bits", 128))
    modes = [EmbeddingMode.parse(m, bits) for m in _split(sec.get("mode", "enum"))]
    behaviors = [Behavior.parse(b) for b in _split(sec.get("behavior", "honest"))]
    targets = [int(x) for x in _split(sec.get("n_compromised", "200"))]
    common = dict(
        num_sets=int(sec.get("num_sets", 20)),
        runs_per_set=int(sec.get("runs_per_set", 50)),
        master_seed=int(sec.get("master_seed", 0)),
        **{k: _as_bool(sec[k]) for k in _BOOL_KEYS if k in sec},
    )
    configs = [
        ExperimentConfig(graph=graph, mode=m, behavior=b, n_compromised=t, **common)
        for t in targets
        for m in modes
        for b in behaviors
    ]
    output = sec.get("output")
    if output and not os.path.isabs(output):
        output = str(Path(path).parent / output)
    return configs, output


# -- message workloads -------------------------------------------------------


@dataclass
class TraceScenario:
    """One embedding plus routed messages as seen by the adversary."""

    g: OverlayGraph
    malicious: frozenset[int]
    coords: list[Coord]
    kb: KnowledgeBase
    paths: list
    records: list  # (msg_id, TraceRecord in overlay ids)


def route_messages(
    g: OverlayGraph,
    coords: Sequence[Coord],
    malicious: Iterable[int],
    kb: KnowledgeBase,
    n_messages: int,
    rng: random.Random,
    mode: EmbeddingMode,
) -> tuple[list, list]:
    """Route random source/target messages; malicious nodes on a path read its target.

    Returns the paths and their trace records.
    """
    bad = frozenset(malicious)
    paths, records = [], []
    for msg_id in range(n_messages):
        src, dst = rng.randrange(g.n), rng.randrange(g.n)
        path = route(g, coords, src, coords[dst], rng)
        paths.append(path)
        if bad.intersection(path.nodes):
            observe_coordinate(kb, coords[dst], mode=mode)
        records.extend((msg_id, rec) for rec in extract_trace_records(path, bad))
    return paths, records


def run_trace_scenario(
    g: OverlayGraph,
    malicious: Iterable[int],
    mode: EmbeddingMode,
    n_messages: int,
    rng: random.Random,
    behavior: Behavior = Behavior.HONEST,
) -> TraceScenario:
    sim = run_embedding_simulation(g, malicious, mode, behavior, rng)
    bad = frozenset(malicious)
    paths, records = route_messages(g, sim.coords, bad, sim.kb, n_messages, rng, mode)
    return TraceScenario(g, bad, sim.coords, sim.kb, paths, records)
