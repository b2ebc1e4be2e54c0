"""Serializability oracle over recorded histories.

Builds the precedence graph of committed transactions by brute force:
every scan predicate is re-evaluated against every other transaction's
before/after images to derive predicate read dependencies, exact item
dependencies come from the version provenance of examined objects, and
write-write edges follow version order. A cycle is a serializability
violation and is returned as a witness.
"""

from __future__ import annotations

from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Optional

from ..document import Document
from ..errors import CatalogError
from ..querylang import parse_predicate
from .history import TxnHistory


@dataclass
class CheckResult:
    acyclic: bool
    cycle: Optional[list]  # commit vids forming the cycle, if any
    edges: set  # (from_vid, to_vid)

    def __bool__(self):
        return self.acyclic


def _object_id(path: str) -> str:
    return path.rsplit("/", 1)[-1]


def build_edges(history: list[TxnHistory]) -> set:
    vids = {t.commit_vid for t in history}
    if len(vids) != len(history):
        raise CatalogError("incomplete history: duplicate commit vids")

    writes_by_parent: dict[Optional[str], list] = {}
    writes_by_path: dict[str, list] = {}
    for txn in history:
        for write in txn.writes:
            writes_by_parent.setdefault(write.parent, []).append((txn.commit_vid, write))
            writes_by_path.setdefault(write.path, []).append((txn.commit_vid, write))
    for versions in writes_by_path.values():
        versions.sort(key=lambda pair: pair[0])

    predicate_cache: dict[str, object] = {}

    def predicate_for(text: str):
        pred = predicate_cache.get(text)
        if pred is None:
            pred = predicate_cache[text] = parse_predicate(text)
        return pred

    image_cache: dict[int, Document] = {}

    def image_doc(obj: dict) -> Document:
        key = id(obj)
        doc = image_cache.get(key)
        if doc is None:
            doc = image_cache[key] = Document.from_json_obj(obj)
        return doc

    edges: set = set()

    # ww: version order per path (consecutive pairs carry the chain)
    for versions in writes_by_path.values():
        for (vid_a, _), (vid_b, _) in zip(versions, versions[1:]):
            if vid_a != vid_b:
                edges.add((vid_a, vid_b))

    for txn in history:
        my_vid = txn.commit_vid

        # predicate dependencies: re-evaluate each scan against every other
        # transaction's images under the same context parent
        for scan in txn.scans:
            pred = predicate_for(scan.predicate)
            for writer_vid, write in writes_by_parent.get(scan.parent, ()):
                if writer_vid == my_vid:
                    continue
                object_id = _object_id(write.path)
                matched = (
                    write.before is not None
                    and pred.matches(object_id, image_doc(write.before))
                ) or (
                    write.after is not None
                    and pred.matches(object_id, image_doc(write.after))
                )
                if not matched:
                    continue
                if writer_vid <= scan.at_vid:
                    edges.add((writer_vid, my_vid))  # wr: scan saw this state
                else:
                    edges.add((my_vid, writer_vid))  # rw: change invisible to scan

        # item dependencies from version provenance
        for path, version_vid in txn.examined:
            if version_vid in vids and version_vid != my_vid:
                edges.add((version_vid, my_vid))  # wr-item
            for writer_vid, _ in writes_by_path.get(path, ()):
                if writer_vid > version_vid and writer_vid != my_vid:
                    edges.add((my_vid, writer_vid))  # rw-item
                    break
    return edges


def check_serializable(history: list[TxnHistory]) -> CheckResult:
    """Acyclicity check of the precedence graph; cycle witness on failure."""
    edges = build_edges(history)
    graph: dict[int, set] = {t.commit_vid: set() for t in history}
    for src, dst in edges:
        graph.setdefault(dst, set()).add(src)  # TopologicalSorter wants predecessors
        graph.setdefault(src, set())
    sorter = TopologicalSorter(graph)
    try:
        sorter.prepare()
    except CycleError as exc:
        return CheckResult(False, list(exc.args[1]), edges)
    return CheckResult(True, None, edges)


def backward_edges(history: list[TxnHistory]) -> list:
    """Dependency edges pointing from a higher commit vid to a lower one;
    empty for any history the default scheme emits."""
    return [(a, b) for a, b in build_edges(history) if a > b]
