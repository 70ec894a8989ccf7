"""Shared generators and brute-force oracles for the test suite."""

from __future__ import annotations

import random
from decimal import Decimal

from vctrace.model import ActionNode, ReasoningTrace
from vctrace.schema import SchemaRegistry

ENTITY_POOL = [
    "EGFR", "KRAS", "BRAF", "TP53", "sorafenib", "gefitinib", "MAPK",
    "HepG2/C3A", "PANC-1", "apoptosis", "nucleus", "cytoplasm",
    "BAY 43-9006", "alpha-synuclein",
]

TEXT_POOL = [
    "phosphorylation", "allosteric", 'quoted "value"', "back\\slash",
    "multi word free text", "x",
]

NUMBER_POOL = ["0", "1", "-2", "4.5", "0.001", "12.75", "1e3", "-3.5e-2"]


def random_value(rng: random.Random, kind: str, enum_values):
    if kind == "enum":
        return rng.choice(sorted(enum_values))
    if kind == "number":
        return Decimal(rng.choice(NUMBER_POOL))
    if kind == "entity":
        return rng.choice(ENTITY_POOL)
    if kind == "entity_list":
        n = rng.randint(1, 4)
        return [rng.choice(ENTITY_POOL) for _ in range(n)]
    return rng.choice(TEXT_POOL)


def make_trace(
    rng: random.Random,
    registry: SchemaRegistry,
    trace_id: str = "t0",
    max_nodes: int = 8,
) -> ReasoningTrace:
    """Schema-conformant trace with sorted (canonical) edges, acyclic by
    construction."""
    primitives = registry.primitives()
    n_nodes = rng.randint(1, max_nodes)
    nodes = []
    for i in range(n_nodes):
        primitive = rng.choice(primitives)
        schema = registry.schema_for(primitive)
        args = {}
        for spec in schema.args:
            if spec.required or rng.random() < 0.4:
                args[spec.name] = random_value(rng, spec.kind, spec.enum_values)
        nodes.append(ActionNode(id=f"n{i + 1}", primitive=primitive, args=args))
    edges = set()
    for _ in range(rng.randint(0, 2 * n_nodes)):
        i = rng.randrange(n_nodes)
        j = rng.randrange(n_nodes)
        if i < j:
            edges.add((nodes[i].id, nodes[j].id))
    explain = rng.choice(
        [
            "a short rationale",
            "the compound binds its target, then expression shifts",
            "rationale with symbols: alpha/beta (50%) & more",
        ]
    )
    return ReasoningTrace(
        trace_id=trace_id,
        perturbation=rng.choice(["sorafenib", "gefitinib", "drugA"]),
        context=rng.choice(["HepG2/C3A", "C32", "PANC-1"]),
        explain=explain,
        nodes=nodes,
        edges=sorted(edges),
    )


def random_digraph(rng: random.Random, max_nodes: int = 50):
    """(node_ids, edges) with arbitrary edges (cycles and self-loops allowed)."""
    n = rng.randint(1, max_nodes)
    ids = [f"n{i}" for i in range(1, n + 1)]
    n_edges = rng.randint(0, 2 * n)
    edges = [
        (ids[rng.randrange(n)], ids[rng.randrange(n)]) for _ in range(n_edges)
    ]
    return ids, edges


def brute_force_has_cycle(node_ids, edges) -> bool:
    """Transitive-closure reachability: cycle iff some node reaches itself."""
    index = {nid: i for i, nid in enumerate(node_ids)}
    n = len(node_ids)
    reach = [[False] * n for _ in range(n)]
    for src, dst in edges:
        reach[index[src]][index[dst]] = True
    for _ in range(n):
        changed = False
        for i in range(n):
            for j in range(n):
                if not reach[i][j] and any(
                    reach[i][k] and reach[k][j] for k in range(n)
                ):
                    reach[i][j] = True
                    changed = True
        if not changed:
            break
    return any(reach[i][i] for i in range(n))


def brute_force_bh(p_values):
    """Direct evaluation of adj_(i) = min_{j>=i} p_(j)*m/j, mapped back."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    for rank, idx in enumerate(order, start=1):
        best = min(
            p_values[order[j - 1]] * m / j for j in range(rank, m + 1)
        )
        adjusted[idx] = min(best, 1.0)
    return adjusted


def reachability_has_cycle(node_ids, edges) -> bool:
    """BFS reachability oracle: cycle iff some node can reach itself."""
    succ = {nid: [] for nid in node_ids}
    for src, dst in edges:
        succ[src].append(dst)
    for start in node_ids:
        seen = set()
        frontier = list(succ[start])
        while frontier:
            node = frontier.pop()
            if node == start:
                return True
            if node in seen:
                continue
            seen.add(node)
            frontier.extend(succ[node])
    return False


# --- QA baseline oracles -----------------------------------------------------


def fp_of(bits_str: str, cid: str = "c"):
    """Fingerprint from a literal bit string like '1100' (MSB first)."""
    from vctrace.qa import Fingerprint

    n = len(bits_str)
    padded = bits_str + "0" * (-n % 8)
    data = bytes(int(padded[i:i + 8], 2) for i in range(0, len(padded), 8))
    return Fingerprint(cid, n, data)


def brute_tanimoto_bits(a: str, b: str) -> float:
    inter = sum(1 for x, y in zip(a, b) if x == "1" and y == "1")
    union = sum(1 for x, y in zip(a, b) if x == "1" or y == "1")
    return inter / union if union else 0.0


def brute_tanimoto_fp(a, b) -> float:
    bits_a = "".join(f"{byte:08b}" for byte in a.bits)
    bits_b = "".join(f"{byte:08b}" for byte in b.bits)
    return brute_tanimoto_bits(bits_a, bits_b)


def brute_knn_predict(test_e, train, fps, k: int) -> int:
    """Full-sort + vote oracle mirroring the kNN contract."""
    compounds = sorted({e.perturbation_id for e in train})
    sims = sorted(
        compounds,
        key=lambda c: (-brute_tanimoto_fp(fps[test_e.perturbation_id], fps[c]), c),
    )
    pool = min(k, len(sims))
    while True:
        votes = []
        nearest = None
        for c in sims[:pool]:
            ls = [
                e.label for e in train
                if (e.perturbation_id, e.context_id, e.gene, e.task)
                == (c, test_e.context_id, test_e.gene, test_e.task)
            ]
            votes.extend(ls)
            if ls and nearest is None:
                nearest = ls[0]
        if votes:
            ones = sum(votes)
            if ones * 2 > len(votes):
                return 1
            if ones * 2 < len(votes):
                return 0
            return nearest
        if pool >= len(sims):
            break
        pool += 1
    base = [e.label for e in train if e.task == test_e.task]
    return int(sum(base) / len(base) > 0.5) if base else 0


def brute_f1(preds, labels) -> float:
    tp = sum(p == 1 and y == 1 for p, y in zip(preds, labels))
    fp = sum(p == 1 and y == 0 for p, y in zip(preds, labels))
    fn = sum(p == 0 and y == 1 for p, y in zip(preds, labels))
    return 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
