"""Graph statistics panel."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import networkx as nx
import numpy as np

from .kg_core import SituationalGraph


@dataclass(frozen=True)
class GraphStats:
    node_count: int
    edge_count: int
    density: float | None
    avg_in_degree: float | None
    avg_out_degree: float | None
    max_in_degree: int
    max_out_degree: int
    scc_count: int
    wcc_count: int
    avg_clustering: float | None
    degree_assortativity: float | None
    reciprocity: float | None


LABELS = {
    "node_count": "Number of Nodes",
    "edge_count": "Number of Edges",
    "density": "Density",
    "avg_in_degree": "Average In-Degree",
    "avg_out_degree": "Average Out-Degree",
    "max_in_degree": "Max In-Degree",
    "max_out_degree": "Max Out-Degree",
    "scc_count": "Number of Strongly Connected Components",
    "wcc_count": "Number of Weakly Connected Components",
    "avg_clustering": "Average Clustering Coefficient",
    "degree_assortativity": "Degree Assortativity Coefficient",
    "reciprocity": "Reciprocity",
}


def to_networkx(g: SituationalGraph) -> nx.DiGraph:
    d = nx.DiGraph()
    d.add_nodes_from(g.nodes)
    d.add_edges_from((h, t) for h, _, t in g.triples)
    return d


def _assortativity(d: nx.DiGraph) -> float | None:
    """Pearson correlation of (out-degree of source, in-degree of target)."""
    pairs = np.array([(d.out_degree(u), d.in_degree(v)) for u, v in d.edges()], dtype=float)
    if len(pairs) < 2:
        return None
    centered = pairs - pairs.mean(axis=0)
    sxx, syy = (centered**2).sum(axis=0)
    if sxx == 0 or syy == 0:
        return None
    return float((centered[:, 0] * centered[:, 1]).sum() / math.sqrt(sxx * syy))


def compute_stats(g: SituationalGraph) -> GraphStats:
    """Panel of structural statistics.

    Clustering is averaged over the undirected simple projection;
    assortativity is the Pearson correlation between the source's out-degree
    and the target's in-degree over directed edges. Fields that are
    undefined for the graph (too few nodes, constant degrees) are None.
    """
    d = to_networkx(g)
    n, m = d.number_of_nodes(), len(g.triples)
    density = m / (n * (n - 1)) if n >= 2 else None
    avg = m / n if n else None
    ins = [deg for _, deg in d.in_degree()]
    outs = [deg for _, deg in d.out_degree()]

    assort = _assortativity(d) if n >= 2 else None

    return GraphStats(
        node_count=n,
        edge_count=m,
        density=density,
        avg_in_degree=avg,
        avg_out_degree=avg,
        max_in_degree=max(ins, default=0),
        max_out_degree=max(outs, default=0),
        scc_count=nx.number_strongly_connected_components(d),
        wcc_count=nx.number_weakly_connected_components(d),
        avg_clustering=nx.average_clustering(d.to_undirected()) if n else None,
        degree_assortativity=assort,
        reciprocity=nx.overall_reciprocity(d) if d.number_of_edges() else None,
    )


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.5g}"
    return f"{value:,}"


def format_text(s: GraphStats) -> str:
    rows = [(LABELS[f.name], _fmt(getattr(s, f.name))) for f in fields(s)]
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"


def format_csv(s: GraphStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["statistic", "value"])
    for k, v in asdict(s).items():
        w.writerow([k, "" if v is None else repr(v)])
    return buf.getvalue()
