"""File-backed retrieval sources: knowledge graph, gene database,
literature and encyclopedia stores, with similarity-fallback lookup.

The default similarity provider is token-set Jaccard over lowercased
alphanumeric tokens; an embedding-backed provider can be plugged in via
the same two-argument interface.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from vctrace.errors import TableFormatError, VCTraceError
from vctrace.ioutil import read_jsonl, read_tsv

DOC_SOURCES = ("literature", "encyclopedia", "gene_db")

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class SimilarityProvider(Protocol):
    def score(self, text_a: str, text_b: str) -> float: ...


class JaccardSimilarity:
    """Token-set Jaccard; symmetric, in [0,1], score(x,x)=1 for nonempty x."""

    @staticmethod
    def _tokens(text: str) -> frozenset[str]:
        return frozenset(_TOKEN_RE.findall(text.lower()))

    def score(self, text_a: str, text_b: str) -> float:
        a, b = self._tokens(text_a), self._tokens(text_b)
        if not a and not b:
            # no tokens to compare; fall back to exact case-folded equality
            return 1.0 if text_a.casefold() == text_b.casefold() else 0.0
        union = a | b
        if not union:
            return 0.0
        return len(a & b) / len(union)


@dataclass(frozen=True)
class KGNode:
    node_id: str
    name: str
    node_type: str
    synonyms: tuple[str, ...] = ()


@dataclass(frozen=True)
class KGEdge:
    src: str
    relation: str
    dst: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    source: str
    title: str
    body: str


class KnowledgeGraph:
    def __init__(self, nodes: list[KGNode], edges: list[KGEdge]):
        self.nodes = list(nodes)
        self.edges = list(edges)
        self._by_id: dict[str, KGNode] = {}
        self._surface: dict[str, list[tuple[KGNode, bool]]] = {}
        for node in nodes:
            if node.node_id in self._by_id:
                raise TableFormatError(f"duplicate KG node_id: {node.node_id}")
            self._by_id[node.node_id] = node
            self._surface.setdefault(node.name.casefold(), []).append((node, True))
            for syn in node.synonyms:
                if syn:
                    self._surface.setdefault(syn.casefold(), []).append((node, False))
        for edge in edges:
            for endpoint in (edge.src, edge.dst):
                if endpoint not in self._by_id:
                    raise TableFormatError(f"KG edge endpoint not a node: {endpoint}")
        self._incident: dict[str, list[KGEdge]] = {}
        for edge in edges:
            self._incident.setdefault(edge.src, []).append(edge)
            if edge.dst != edge.src:
                self._incident.setdefault(edge.dst, []).append(edge)

    def node(self, node_id: str) -> KGNode:
        return self._by_id[node_id]

    def lookup_node(
        self, mention: str, provider: SimilarityProvider | None = None
    ) -> tuple[KGNode, str]:
        """Exact/synonym case-folded match, else similarity argmax.

        Returns (node, match_method) with method in {exact, synonym,
        similarity}; ties break by node_id. Raises on an empty graph.
        """
        if not self.nodes:
            raise VCTraceError("knowledge graph is empty")
        hits = self._surface.get(mention.strip().casefold(), [])
        for want_canonical, method in ((True, "exact"), (False, "synonym")):
            pool = sorted(
                {n.node_id: n for n, c in hits if c == want_canonical}.values(),
                key=lambda n: n.node_id,
            )
            if pool:
                return pool[0], method
        provider = provider or JaccardSimilarity()
        best = min(
            self.nodes, key=lambda n: (-provider.score(mention, n.name), n.node_id)
        )
        return best, "similarity"

    def neighborhood_context(self, node: KGNode, max_neighbors: int = 100) -> str:
        """Deterministic 1-hop textual context for a node.

        Header line, then one line per incident edge sorted by (relation,
        neighbor name), truncated to max_neighbors with a closing note.
        """
        header = f"{node.name} ({node.node_type})"
        entries = []
        for edge in self._incident.get(node.node_id, []):
            if edge.src == node.node_id:
                neighbor = self._by_id[edge.dst]
                line = f"{node.name} —{edge.relation}→ {neighbor.name}"
            else:
                neighbor = self._by_id[edge.src]
                line = f"{neighbor.name} —{edge.relation}→ {node.name}"
            entries.append(((edge.relation, neighbor.name, neighbor.node_id), line))
        entries.sort(key=lambda item: item[0])
        lines = [line for _, line in entries]
        total = len(lines)
        if total > max_neighbors:
            lines = lines[:max_neighbors]
            lines.append(f"[truncated: showing {max_neighbors} of {total} edges]")
        return "\n".join([header] + lines)


class DocumentStore:
    def __init__(self, documents: list[Document]):
        self.documents = sorted(documents, key=lambda d: (d.source, d.doc_id))
        seen: set[tuple[str, str]] = set()
        for doc in documents:
            key = (doc.source, doc.doc_id)
            if key in seen:
                raise TableFormatError(f"duplicate doc_id {doc.doc_id!r} in {doc.source}")
            seen.add(key)

    def by_source(self, source: str) -> list[Document]:
        return [d for d in self.documents if d.source == source]

    def gene_context(self, gene_symbol: str) -> str:
        """All gene_db docs whose title case-folds to the symbol, doc_id order."""
        wanted = gene_symbol.strip().casefold()
        bodies = [
            d.body
            for d in self.by_source("gene_db")
            if d.title.casefold() == wanted
        ]
        return "\n".join(bodies)

    def search_documents(
        self,
        entities: list[str],
        source: str,
        k: int,
        provider: SimilarityProvider | None = None,
    ) -> list[Document]:
        """Top-k docs of a source ranked by similarity to the entity set."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not entities:
            return []
        provider = provider or JaccardSimilarity()
        query = " ".join(entities)
        pool = self.by_source(source)
        ranked = sorted(
            pool,
            key=lambda d: (-provider.score(query, f"{d.title} {d.body}"), d.doc_id),
        )
        return ranked[:k]


def load_kg(nodes_path: str | Path, edges_path: str | Path) -> KnowledgeGraph:
    node_rows = read_tsv(nodes_path, ["node_id", "name", "node_type", "synonyms"])
    nodes = [
        KGNode(
            node_id=r["node_id"],
            name=r["name"],
            node_type=r["node_type"],
            synonyms=tuple(s for s in r["synonyms"].split("|") if s),
        )
        for r in node_rows
    ]
    edge_rows = read_tsv(edges_path, ["src", "relation", "dst"])
    edges = [KGEdge(src=r["src"], relation=r["relation"], dst=r["dst"]) for r in edge_rows]
    return KnowledgeGraph(nodes, edges)


def load_documents(path: str | Path) -> DocumentStore:
    """Document store JSONL: doc_id, source, title, body."""
    docs = []
    for lineno, obj, error in read_jsonl(path):
        if error:
            raise TableFormatError(f"{path}:{lineno}: {error}")
        missing = [k for k in ("doc_id", "source", "title", "body") if k not in obj]
        if missing:
            raise TableFormatError(
                f"{path}:{lineno}: missing field(s): {', '.join(missing)}"
            )
        if obj["source"] not in DOC_SOURCES:
            raise TableFormatError(f"{path}:{lineno}: unknown source {obj['source']!r}")
        docs.append(
            Document(
                doc_id=str(obj["doc_id"]),
                source=str(obj["source"]),
                title=str(obj["title"]),
                body=str(obj["body"]),
            )
        )
    return DocumentStore(docs)
