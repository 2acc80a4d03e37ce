"""Time-aligned hypothesis lattices and their score computations.

A lattice is an acyclic graph of senone-aligned word arcs. Arc scores live
in the natural-log domain, split into an acoustic part and an LM part.
Every complete path covers the utterance's frames exactly once; epsilon
arcs cover no frames (they carry sentence-end LM scores).

forward_backward computes totals and occupancies in the log-sum-exp
semiring; enumerate_paths is the brute-force oracle it is checked against.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from heapq import heappop, heappush

import numpy as np

EPSILON = "<eps>"


class LatticeError(ValueError):
    """Malformed lattice, with a diagnosis of what is wrong."""


class EnumerationCapExceeded(RuntimeError):
    """The lattice has more paths than the enumeration oracle allows."""


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    word: str | None          # None for epsilon arcs
    senones: tuple            # per-frame senone ids over the arc's span
    acoustic: float
    lm: float

    @property
    def weight(self) -> float:
        return self.acoustic + self.lm


@dataclass
class Lattice:
    num_frames: int
    node_frames: list         # frame stamp per node id
    arcs: list                # list[Arc]
    start: int
    end: int

    @property
    def num_nodes(self) -> int:
        return len(self.node_frames)


def validate(lat: Lattice) -> list:
    """Check the structural invariants; returns a topological node order.

    Raises LatticeError naming the defect (cycle, dead node, bad span, ...).
    """
    n = lat.num_nodes
    if not (0 <= lat.start < n and 0 <= lat.end < n):
        raise LatticeError("start/end node ids out of range")
    if lat.node_frames[lat.start] != 0:
        raise LatticeError("start node must sit at frame 0")
    if lat.node_frames[lat.end] != lat.num_frames:
        raise LatticeError("end node must sit at frame %d" % lat.num_frames)
    out_arcs = [[] for _ in range(n)]
    indeg = [0] * n
    for i, arc in enumerate(lat.arcs):
        span = lat.node_frames[arc.dst] - lat.node_frames[arc.src]
        if span < 0:
            raise LatticeError("arc %d goes backwards in time" % i)
        if span != len(arc.senones):
            raise LatticeError("arc %d spans %d frames but carries %d senones"
                               % (i, span, len(arc.senones)))
        out_arcs[arc.src].append(i)
        indeg[arc.dst] += 1

    order = []
    queue = deque(v for v in range(n) if indeg[v] == 0)
    remaining = indeg[:]
    while queue:
        v = queue.popleft()
        order.append(v)
        for i in out_arcs[v]:
            d = lat.arcs[i].dst
            remaining[d] -= 1
            if remaining[d] == 0:
                queue.append(d)
    if len(order) != n:
        raise LatticeError("cycle detected among %d nodes" % (n - len(order)))

    reach = _reachable(lat, forward=True)
    coreach = _reachable(lat, forward=False)
    for v in range(n):
        if not (reach[v] and coreach[v]):
            raise LatticeError("dead node %d (unreachable or cannot reach end)" % v)
    for v in range(n):
        if v != lat.start and indeg[v] == 0:
            raise LatticeError("node %d has no incoming arcs but is not the start" % v)
        if v != lat.end and not out_arcs[v]:
            raise LatticeError("node %d has no outgoing arcs but is not the end" % v)
    return order


def _reachable(lat: Lattice, forward: bool):
    n = lat.num_nodes
    adj = [[] for _ in range(n)]
    for arc in lat.arcs:
        if forward:
            adj[arc.src].append(arc.dst)
        else:
            adj[arc.dst].append(arc.src)
    seen = [False] * n
    stack = [lat.start if forward else lat.end]
    seen[stack[0]] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return seen


@dataclass
class FBResult:
    total: float
    arc_posteriors: np.ndarray        # aligned with lat.arcs
    gamma: np.ndarray | None          # [num_frames x num_senones] occupancies
    alphas: np.ndarray
    betas: np.ndarray


def forward_backward(lat: Lattice, num_senones: int | None = None) -> FBResult:
    """Log-sum-exp forward-backward over the lattice.

    Arc posteriors are in [0, 1] and the posteriors of arcs crossing any
    given frame sum to 1. If num_senones is given, gamma aggregates the arc
    posteriors onto their senone alignments per frame.
    """
    order = validate(lat)
    n = lat.num_nodes
    out_arcs = [[] for _ in range(n)]
    in_arcs = [[] for _ in range(n)]
    for i, arc in enumerate(lat.arcs):
        out_arcs[arc.src].append(i)
        in_arcs[arc.dst].append(i)

    alpha = np.full(n, -np.inf)
    alpha[lat.start] = 0.0
    for v in order:
        if alpha[v] == -np.inf:
            continue
        for i in out_arcs[v]:
            arc = lat.arcs[i]
            alpha[arc.dst] = np.logaddexp(alpha[arc.dst], alpha[v] + arc.weight)
    beta = np.full(n, -np.inf)
    beta[lat.end] = 0.0
    for v in reversed(order):
        if beta[v] == -np.inf:
            continue
        for i in in_arcs[v]:
            arc = lat.arcs[i]
            beta[arc.src] = np.logaddexp(beta[arc.src], beta[v] + arc.weight)

    total = alpha[lat.end]
    if not np.isfinite(total):
        raise LatticeError("lattice has no complete path with finite score")
    post = np.exp(np.array([
        alpha[a.src] + a.weight + beta[a.dst] - total for a in lat.arcs
    ]))
    gamma = None
    if num_senones is not None:
        gamma = np.zeros((lat.num_frames, num_senones))
        for i, arc in enumerate(lat.arcs):
            f0 = lat.node_frames[arc.src]
            for k, s in enumerate(arc.senones):
                gamma[f0 + k, s] += post[i]
    return FBResult(float(total), post, gamma, alpha, beta)


def count_paths(lat: Lattice) -> int:
    order = validate(lat)
    counts = [0] * lat.num_nodes
    counts[lat.start] = 1
    out_arcs = [[] for _ in range(lat.num_nodes)]
    for arc in lat.arcs:
        out_arcs[arc.src].append(arc.dst)
    for v in order:
        for d in out_arcs[v]:
            counts[d] += counts[v]
    return counts[lat.end]


def enumerate_paths(lat: Lattice, cap: int = 100000):
    """Exhaustive (arc-index path, log-score) list; the oracle for all
    lattice math. Refuses lattices with more than ``cap`` paths."""
    total_paths = count_paths(lat)
    if total_paths > cap:
        raise EnumerationCapExceeded("lattice has %d paths, cap is %d" % (total_paths, cap))
    out_arcs = [[] for _ in range(lat.num_nodes)]
    for i, arc in enumerate(lat.arcs):
        out_arcs[arc.src].append(i)
    results = []

    def walk(v, prefix, score):
        if v == lat.end:
            results.append((tuple(prefix), score))
            # end node has no outgoing arcs (validated)
            return
        for i in out_arcs[v]:
            arc = lat.arcs[i]
            prefix.append(i)
            walk(arc.dst, prefix, score + arc.weight)
            prefix.pop()

    walk(lat.start, [], 0.0)
    return results


def path_words(lat: Lattice, arc_indices) -> tuple:
    return tuple(lat.arcs[i].word for i in arc_indices if lat.arcs[i].word is not None)


def best_path(lat: Lattice):
    """Viterbi (max) path; returns (words, score, arc_indices)."""
    order = validate(lat)
    n = lat.num_nodes
    best = np.full(n, -np.inf)
    best[lat.start] = 0.0
    back = [-1] * n
    out_arcs = [[] for _ in range(n)]
    for i, arc in enumerate(lat.arcs):
        out_arcs[arc.src].append(i)
    for v in order:
        if best[v] == -np.inf:
            continue
        for i in out_arcs[v]:
            arc = lat.arcs[i]
            cand = best[v] + arc.weight
            if cand > best[arc.dst]:
                best[arc.dst] = cand
                back[arc.dst] = i
    if not np.isfinite(best[lat.end]):
        raise LatticeError("no complete path")
    arcs_rev = []
    v = lat.end
    while v != lat.start:
        i = back[v]
        arcs_rev.append(i)
        v = lat.arcs[i].src
    arcs = tuple(reversed(arcs_rev))
    return path_words(lat, arcs), float(best[lat.end]), arcs


def nbest_paths(lat: Lattice, n: int, max_pops: int = 200000):
    """Up to n best-scoring distinct word sequences: (words, score, arcs).

    Lazy best-first search guided by the exact max-backward heuristic, so
    paths pop in nonincreasing score order; duplicate word sequences keep
    their best-scoring path.
    """
    order = validate(lat)
    nn = lat.num_nodes
    out_arcs = [[] for _ in range(nn)]
    for i, arc in enumerate(lat.arcs):
        out_arcs[arc.src].append(i)
    bstar = np.full(nn, -np.inf)
    bstar[lat.end] = 0.0
    for v in reversed(order):
        for i in out_arcs[v]:
            arc = lat.arcs[i]
            cand = arc.weight + bstar[arc.dst]
            if cand > bstar[v]:
                bstar[v] = cand

    heap = []
    counter = 0
    heappush(heap, (-bstar[lat.start], counter, lat.start, 0.0, ()))
    results = []
    seen_words = set()
    pops = 0
    while heap and len(results) < n and pops < max_pops:
        _, _, v, g, arcs = heappop(heap)
        pops += 1
        if v == lat.end:
            words = path_words(lat, arcs)
            if words not in seen_words:
                seen_words.add(words)
                results.append((words, g, arcs))
            continue
        for i in out_arcs[v]:
            arc = lat.arcs[i]
            g2 = g + arc.weight
            counter += 1
            heappush(heap, (-(g2 + bstar[arc.dst]), counter, arc.dst, g2, arcs + (i,)))
    return results


def contains_words(lat: Lattice, words) -> bool:
    """Does any complete path spell this word sequence?"""
    words = tuple(words)
    out_arcs = [[] for _ in range(lat.num_nodes)]
    for i, arc in enumerate(lat.arcs):
        out_arcs[arc.src].append(i)
    seen = set()
    stack = [(lat.start, 0)]
    while stack:
        v, pos = stack.pop()
        if (v, pos) in seen:
            continue
        seen.add((v, pos))
        if v == lat.end and pos == len(words):
            return True
        for i in out_arcs[v]:
            arc = lat.arcs[i]
            if arc.word is None:
                stack.append((arc.dst, pos))
            elif pos < len(words) and arc.word == words[pos]:
                stack.append((arc.dst, pos + 1))
    return False


def rescore_acoustic(lat: Lattice, frame_scores: np.ndarray) -> Lattice:
    """Replace arc acoustic scores by re-summing per-frame senone scores
    over each arc's alignment; LM scores are untouched."""
    arcs = []
    for arc in lat.arcs:
        f0 = lat.node_frames[arc.src]
        ac = 0.0
        for k, s in enumerate(arc.senones):
            ac += float(frame_scores[f0 + k, s])
        arcs.append(replace(arc, acoustic=ac))
    return Lattice(lat.num_frames, list(lat.node_frames), arcs, lat.start, lat.end)


# ---------------------------------------------------------------------------
# Text format
#
# header:  "<num_nodes> <num_arcs> <num_frames> <start> <end>"
# nodes:   "<id> <frame>"
# arcs:    "<src> <dst> <word|<eps>> <senones comma-separated|-> <ac> <lm>"
# Floats are written with 17 significant digits so round trips are lossless.


def write_lattice(path, lat: Lattice) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%d %d %d %d %d\n" % (lat.num_nodes, len(lat.arcs),
                                       lat.num_frames, lat.start, lat.end))
        for v, f in enumerate(lat.node_frames):
            fh.write("%d %d\n" % (v, f))
        for arc in lat.arcs:
            word = EPSILON if arc.word is None else arc.word
            if " " in word:
                raise ValueError("word labels must not contain spaces: %r" % word)
            sen = ",".join(str(s) for s in arc.senones) if arc.senones else "-"
            fh.write("%d %d %s %s %.17g %.17g\n"
                     % (arc.src, arc.dst, word, sen, arc.acoustic, arc.lm))


def read_lattice(path) -> Lattice:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise LatticeError("bad lattice header")
        n, a, frames, start, end = (int(x) for x in header)
        node_frames = [0] * n
        for _ in range(n):
            vid, f = fh.readline().split()
            node_frames[int(vid)] = int(f)
        arcs = []
        for _ in range(a):
            parts = fh.readline().split()
            if len(parts) != 6:
                raise LatticeError("bad arc line %r" % (parts,))
            src, dst, word, sen, ac, lm = parts
            senones = () if sen == "-" else tuple(int(s) for s in sen.split(","))
            arcs.append(Arc(int(src), int(dst), None if word == EPSILON else word,
                            senones, float(ac), float(lm)))
    lat = Lattice(frames, node_frames, arcs, start, end)
    validate(lat)
    return lat
