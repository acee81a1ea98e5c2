"""Bounded explicit-state exploration and weak-bisimulation checking.

Equivalence is decided on the saturated transition relation: observable moves
become closure·a·closure, unobservable moves become the (reflexive) closure
itself, and the coarsest strong bisimulation of the saturated system is
computed by signature-based partition refinement.  Two systems are weakly
bisimilar iff their initial states land in the same block.

The refinement inner loop is vectorized with numpy so desk-scale instances
(hundreds of thousands of states) check in seconds to minutes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import BoundExceeded
from .expr import free_vars
from .model import BuiltinStep, CompositeSystem
from .semantics import compile_system, label_name

THETA = "θ"


def _dead_variable_slots(sys: CompositeSystem) -> list[list[tuple[int, object]]]:
    """Per component: slots of variables no guard, computation step, transfer
    or builtin ever reads, with their initial values.

    States that differ only in such variables are trivially bisimilar (every
    move is enabled in both and writes identical values), so the explorer may
    canonicalize them away; this keeps write-only output variables from
    multiplying the state space.
    """
    live: list[set[str]] = [set() for _ in sys.components]
    index = {c.id: i for i, c in enumerate(sys.components)}
    for i, c in enumerate(sys.components):
        for t in c.transitions:
            live[i] |= free_vars(t.guard)
            if not isinstance(t.step, BuiltinStep):
                for a in t.step:
                    live[i] |= free_vars(a.source)
        reads = getattr(c.behavior, "read_variables", None)
        if reads is not None:
            live[i] |= set(reads())
    for inter in sys.interactions:
        for a in inter.transfer:
            for name in free_vars(a.source):
                cid, _, var = name.partition(".")
                if cid in index:
                    live[index[cid]].add(var)
    out: list[list[tuple[int, object]]] = []
    for i, c in enumerate(sys.components):
        dead = [
            (slot, init)
            for slot, (name, init) in enumerate(c.variables)
            if name not in live[i]
        ]
        out.append(dead)
    return out


@dataclass
class ExplicitLts:
    """A finite LTS with interned states; state 0 is initial."""

    n_states: int
    labels: tuple[str, ...]
    edges: np.ndarray  # shape (m, 3): source, label index, target
    unobservable: frozenset[str] = frozenset()
    initial: int = 0

    def __repr__(self) -> str:
        return (f"ExplicitLts(states={self.n_states}, labels={len(self.labels)}, "
                f"edges={len(self.edges)})")


def explore(sys: CompositeSystem, state_bound: int = 2_000_000,
            unobservable: Iterable[str] = ()) -> ExplicitLts:
    """Breadth-first exploration of the reachable state space.

    Component states are interned separately so large products stay cheap to
    hold; raises BoundExceeded once more than ``state_bound`` system states
    have been interned.

    Two sound reductions keep self-reconstructing systems finite to explore:
    states whose only enabled moves are hidden delivery interactions are
    collapsed onto their (unique, locally verified) flush successor, and
    components may canonicalize behaviorally inert parts of their state (see
    the behaviors' ``canonical`` hooks).  Both preserve weak bisimilarity.
    """
    cs = compile_system(sys)
    n_comp = len(cs.components)
    comp_intern: list[dict] = [{} for _ in range(n_comp)]
    comp_pool: list[list] = [[] for _ in range(n_comp)]
    dead_slots = _dead_variable_slots(sys)
    hidden = frozenset(unobservable)

    def reduction_ok(i: int) -> bool:
        pre = getattr(sys.components[i].behavior, "reduction_precondition", None)
        return pre is None or pre(sys, hidden)

    canon_fns = [
        getattr(cc.behavior, "canonical", None) if reduction_ok(i) else None
        for i, cc in enumerate(cs.components)
    ]
    unstable_hooks = [
        (i, cc.behavior.unstable)
        for i, cc in enumerate(cs.components)
        if hasattr(cc.behavior, "unstable")
    ]
    flushable = {
        id(ci) for ci in cs.interactions
        if ci.inter.kind == "delivery" and label_name(ci.label) in hidden
    }

    def may_flush(enc) -> bool:
        if not flushable:
            return False
        if unstable_hooks:
            return any(h(enc[i]) for i, h in unstable_hooks)
        return True

    def flush(enc):
        # quotient out forced hidden-delivery chains: applies only when every
        # enabled move is such a delivery and all of them agree on the result
        while may_flush(enc):
            enabled = cs.enabled(enc)
            if not enabled or any(id(ci) not in flushable for ci in enabled):
                return enc
            succ = None
            for ci in enabled:
                e2, _ = cs.fire(enc, ci)
                if succ is None:
                    succ = e2
                elif e2 != succ:
                    return enc
            enc = succ
        return enc

    def intern_state(enc):
        """Returns (per-component pool ids, canonical representative state).

        The canonical representative is what gets explored; behaviors'
        ``canonical`` hooks must return a valid component state that fires
        identically on every observable."""
        key = []
        rep = []
        for i in range(n_comp):
            e = enc[i]
            dead = dead_slots[i]
            if dead:
                vals = list(e[1])
                for slot, init in dead:
                    vals[slot] = init
                e = (e[0], tuple(vals), e[2])
            canon = canon_fns[i]
            if canon is not None:
                e = canon(e)
            table = comp_intern[i]
            k = table.get(e)
            if k is None:
                k = len(comp_pool[i])
                table[e] = k
                comp_pool[i].append(e)
            key.append(k)
            rep.append(e)
        return tuple(key), tuple(rep)

    # per-component ports enabled, cached on the interned component state
    # (canonicalization preserves location and variable values, on which
    # enabledness exclusively depends)
    port_cache: list[list] = [[] for _ in range(n_comp)]

    def enabled_ports(i: int, k: int):
        cache = port_cache[i]
        while len(cache) <= k:
            cache.append(None)
        ports = cache[k]
        if ports is None:
            loc, values, _ = comp_pool[i][k]
            cc = cs.components[i]
            ports = frozenset(
                port for (src, port), cts in cc.by_source_port.items()
                if src == loc and any(ct.guard(values) for ct in cts)
            )
            cache[k] = ports
        return ports

    labels = tuple(label_name(ci.label) for ci in cs.interactions)
    init_key, init_rep = intern_state(flush(cs.initial()))
    seen: dict[tuple[int, ...], int] = {init_key: 0}
    frontier: list[tuple[tuple, int, tuple]] = [(init_rep, 0, init_key)]
    edges_src: list[int] = []
    edges_lab: list[int] = []
    edges_tgt: list[int] = []
    while frontier:
        next_frontier: list[tuple[tuple, int, tuple]] = []
        for enc, sid, comp_key in frontier:
            for lab_idx, ci in enumerate(cs.interactions):
                for pos, port in ci.parts:
                    if port not in enabled_ports(pos, comp_key[pos]):
                        break
                else:
                    enc2, _ = cs.fire(enc, ci)
                    enc2 = flush(enc2)
                    key, rep = intern_state(enc2)
                    tid = seen.get(key)
                    if tid is None:
                        tid = len(seen)
                        if tid >= state_bound:
                            raise BoundExceeded(state_bound, len(next_frontier))
                        seen[key] = tid
                        next_frontier.append((rep, tid, key))
                    edges_src.append(sid)
                    edges_lab.append(lab_idx)
                    edges_tgt.append(tid)
        frontier = next_frontier
    if edges_src:
        edges = np.stack([
            np.asarray(edges_src, dtype=np.int64),
            np.asarray(edges_lab, dtype=np.int64),
            np.asarray(edges_tgt, dtype=np.int64),
        ], axis=1)
    else:
        edges = np.empty((0, 3), dtype=np.int64)
    return ExplicitLts(
        n_states=len(seen),
        labels=labels,
        edges=edges,
        unobservable=frozenset(unobservable),
    )


# --- θ-closure -------------------------------------------------------------------


def _closure_pairs(n: int, theta: np.ndarray) -> np.ndarray:
    """Reflexive-transitive closure of the unobservable edges as (anc, desc)
    pairs.  Cycles are handled by SCC condensation; states untouched by
    unobservable edges contribute their reflexive pair only."""
    idx_all = np.arange(n, dtype=np.int64)
    reflexive = np.stack([idx_all, idx_all], axis=1)
    if len(theta) == 0:
        return reflexive
    adj: dict[int, list[int]] = {}
    verts: list[int] = []
    seen_v: set[int] = set()
    for s, t in theta:
        s, t = int(s), int(t)
        adj.setdefault(s, []).append(t)
        for v in (s, t):
            if v not in seen_v:
                seen_v.add(v)
                verts.append(v)
    # iterative Tarjan on the induced subgraph
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    scc_of: dict[int, int] = {}
    counter = 0
    n_scc = 0
    for root in verts:
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            out = adj.get(v, ())
            advanced = False
            for k in range(pi, len(out)):
                w = out[k]
                if w not in index:
                    work[-1] = (v, k + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    scc_of[w] = n_scc
                    if w == v:
                        break
                n_scc += 1
            if work:
                p, _ = work[-1]
                low[p] = min(low[p], low[v])
    # condensation reach sets; Tarjan ids come out in reverse topological order
    scc_succ: list[set[int]] = [set() for _ in range(n_scc)]
    for s, t in theta:
        a, b = scc_of[int(s)], scc_of[int(t)]
        if a != b:
            scc_succ[a].add(b)
    members: list[list[int]] = [[] for _ in range(n_scc)]
    for v in verts:
        members[scc_of[v]].append(v)
    reach: list[frozenset[int]] = [frozenset()] * n_scc
    for c in range(n_scc):
        acc = {c}
        for d in scc_succ[c]:
            acc.add(d)
            acc |= reach[d]
        reach[c] = frozenset(acc)
    anc_parts = [reflexive[:, 0]]
    desc_parts = [reflexive[:, 1]]
    for c in range(n_scc):
        descs = [w for d in reach[c] for w in members[d]]
        if len(descs) == 1 and reach[c] == frozenset({c}) and len(members[c]) == 1:
            continue  # trivial; reflexive pair already emitted
        descs_arr = np.asarray(sorted(descs), dtype=np.int64)
        for v in members[c]:
            anc_parts.append(np.full(len(descs_arr), v, dtype=np.int64))
            desc_parts.append(descs_arr)
    anc = np.concatenate(anc_parts)
    desc = np.concatenate(desc_parts)
    # drop duplicate (anc, desc) rows (reflexive pairs may repeat)
    packed = anc * np.int64(n) + desc
    _, keep = np.unique(packed, return_index=True)
    return np.stack([anc[keep], desc[keep]], axis=1)


# --- saturation --------------------------------------------------------------------


def _expand_join(left_key: np.ndarray, left_payload: np.ndarray,
                 right_sorted_key: np.ndarray, right_payload: np.ndarray):
    """For every left row, pair its payload with the payload of every right
    row whose (pre-sorted) key equals the left key."""
    lo = np.searchsorted(right_sorted_key, left_key, side="left")
    hi = np.searchsorted(right_sorted_key, left_key, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return left_payload[:0], right_payload[:0]
    rep_left = np.repeat(left_payload, counts, axis=0)
    starts = lo[counts > 0]
    lens = counts[counts > 0]
    offsets = np.concatenate([[0], np.cumsum(lens)[:-1]])
    idx = np.repeat(starts - offsets, lens) + np.arange(total)
    return rep_left, right_payload[idx]


def _dedup_rows(a: np.ndarray, b: np.ndarray, c: np.ndarray):
    if len(a) == 0:
        return a, b, c
    order = np.lexsort((c, b, a))
    a, b, c = a[order], b[order], c[order]
    keep = np.empty(len(a), dtype=bool)
    keep[0] = True
    keep[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1]) | (c[1:] != c[:-1])
    return a[keep], b[keep], c[keep]


def _saturate(n: int, edges: np.ndarray, hidden_mask: np.ndarray):
    """Weak observable transitions θ*·a·θ* plus the closure pairs."""
    theta_edges = edges[hidden_mask][:, [0, 2]]
    obs = edges[~hidden_mask]
    cl = _closure_pairs(n, theta_edges)
    empty = np.empty(0, dtype=np.int64)
    if len(obs) == 0:
        return empty, empty, empty, cl
    cl_by_desc = cl[np.argsort(cl[:, 1], kind="stable")]
    obs_by_src = obs[np.argsort(obs[:, 0], kind="stable")]
    # anc --θ*--> u --a--> t
    anc_rep, obs_rows = _expand_join(
        cl_by_desc[:, 1], cl_by_desc[:, 0], obs_by_src[:, 0], obs_by_src)
    if len(obs_rows) == 0:
        return empty, empty, empty, cl
    src1, lab1, tgt1 = _dedup_rows(anc_rep, obs_rows[:, 1], obs_rows[:, 2])
    # ... --a--> t --θ*--> d
    cl_by_anc = cl[np.argsort(cl[:, 0], kind="stable")]
    order = np.argsort(tgt1, kind="stable")
    src1, lab1, tgt1 = src1[order], lab1[order], tgt1[order]
    pay = np.stack([src1, lab1], axis=1)
    pay_rep, desc = _expand_join(tgt1, pay, cl_by_anc[:, 0], cl_by_anc[:, 1])
    return (*_dedup_rows(pay_rep[:, 0], pay_rep[:, 1], desc), cl)


class _Saturated:
    """Shared label space and saturated weak edges of two LTSs laid out side
    by side (second system's states offset by the first one's count)."""

    def __init__(self, l1: ExplicitLts, l2: ExplicitLts):
        names = sorted(
            (set(l1.labels) - l1.unobservable) | (set(l2.labels) - l2.unobservable))
        self.obs_names = names
        self.theta_id = len(names)
        self.n1 = l1.n_states
        self.n = l1.n_states + l2.n_states
        name_id = {s: i for i, s in enumerate(names)}

        def prepare(lts: ExplicitLts, offset: int):
            if len(lts.edges) == 0:
                return (np.empty((0, 3), dtype=np.int64),
                        np.empty(0, dtype=bool))
            hid = np.fromiter(
                (lts.labels[k] in lts.unobservable for k in lts.edges[:, 1]),
                dtype=bool, count=len(lts.edges))
            remap = np.fromiter(
                (name_id.get(lab, -1) for lab in lts.labels),
                dtype=np.int64, count=len(lts.labels))
            edges = lts.edges.copy()
            edges[:, 0] += offset
            edges[:, 2] += offset
            edges[:, 1] = remap[lts.edges[:, 1]]
            return edges, hid

        e1, h1 = prepare(l1, 0)
        e2, h2 = prepare(l2, self.n1)
        edges = np.concatenate([e1, e2], axis=0)
        hidden = np.concatenate([h1, h2], axis=0)
        self.wsrc, self.wlab, self.wtgt, self.cl = _saturate(self.n, edges, hidden)


# --- the checker ---------------------------------------------------------------------


@dataclass
class BisimResult:
    equivalent: bool
    n_blocks: int = 0
    blocks: Optional[np.ndarray] = None  # block id per combined state
    offset: int = 0  # second system's states start here
    counterexample: Optional[list[str]] = None
    counterexample_side: Optional[int] = None  # which LTS executes it (1 or 2)

    def related(self, s1: int, s2: int) -> bool:
        """Whether state s1 of the first system and s2 of the second are
        weakly bisimilar."""
        if self.blocks is None:
            return False
        return bool(self.blocks[s1] == self.blocks[self.offset + s2])

    def relation_pairs(self, limit: int = 100_000) -> list[tuple[int, int]]:
        """Materialized cross pairs of the relation (small instances only)."""
        if self.blocks is None:
            return []
        by_block: dict[int, list[int]] = {}
        for j, b in enumerate(self.blocks[self.offset:]):
            by_block.setdefault(int(b), []).append(j)
        out: list[tuple[int, int]] = []
        for i, b in enumerate(self.blocks[: self.offset]):
            for j in by_block.get(int(b), ()):
                out.append((i, j))
                if len(out) >= limit:
                    return out
        return out


def _mix1(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _mix2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) + np.uint64(0xD1B54A32D192ED03)
    x = (x ^ (x >> np.uint64(29))) * np.uint64(0xFF51AFD7ED558CCD)
    x = (x ^ (x >> np.uint64(32))) * np.uint64(0xC4CEB9FE1A85EC53)
    return x ^ (x >> np.uint64(33))


def _expand_ranges(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    lens = stops - starts
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    nz = lens > 0
    starts, lens = starts[nz], lens[nz]
    offsets = np.concatenate([[0], np.cumsum(lens)[:-1]])
    return np.repeat(starts - offsets, lens) + np.arange(total)


def _refine_partition(n: int, src: np.ndarray, lab: np.ndarray, tgt: np.ndarray):
    """Coarsest strong-bisimulation partition of a (saturated) edge list by
    incremental signature refinement with stable block ids.

    Invariant: all members of a block share the same stored signature, and a
    stored signature only references block ids that have not changed since it
    was computed.  Each round recomputes the signatures of predecessors of
    just-moved states; within every touched block, the subgroup whose new
    signature still equals the block's reference signature keeps the block id
    (if the whole block was recomputed and nobody matches, the largest
    subgroup keeps it), every other subgroup gets a fresh id.  Ids therefore
    change only on genuine refinement and the loop terminates.

    Signatures are order-insensitive hashes of the deduplicated atom set; a
    collision would merge distinct behaviors with probability ~2^-100.
    """
    order = np.argsort(src, kind="stable")
    src, lab, tgt = src[order], lab[order], tgt[order]
    out_bounds = np.searchsorted(src, np.arange(n + 1))
    if not (out_bounds[1:] > out_bounds[:-1]).all():
        raise AssertionError("every state must carry its reflexive closure row")
    rev_order = np.argsort(tgt, kind="stable")
    rev_tgt = tgt[rev_order]
    rev_src = src[rev_order]
    rev_bounds = np.searchsorted(rev_tgt, np.arange(n + 1))

    atom_base = np.int64(n + 1)
    blocks = np.zeros(n, dtype=np.int64)
    block_size = np.zeros(2 * n + 2, dtype=np.int64)
    block_size[0] = n
    sig1 = np.zeros(n, dtype=np.uint64)
    sig2 = np.zeros(n, dtype=np.uint64)
    sigc = np.full(n, -1, dtype=np.int64)
    next_block = 1
    changed = np.arange(n, dtype=np.int64)
    first = True
    while changed.size:
        if first:
            aff = changed
            first = False
        else:
            idx = _expand_ranges(rev_bounds[changed], rev_bounds[changed + 1])
            aff = np.unique(rev_src[idx])
            if aff.size == 0:
                break
        # new signatures of the affected states
        eidx = _expand_ranges(out_bounds[aff], out_bounds[aff + 1])
        group = np.repeat(
            np.arange(aff.size, dtype=np.int64),
            out_bounds[aff + 1] - out_bounds[aff])
        atoms = lab[eidx] * atom_base + blocks[tgt[eidx]]
        base = np.int64(int(atoms.max()) + 2)
        uk = np.unique(group * base + atoms)
        g = uk // base
        atom_u = uk % base
        bounds_g = np.searchsorted(g, np.arange(aff.size + 1))
        with np.errstate(over="ignore"):
            s1 = np.add.reduceat(_mix1(atom_u), bounds_g[:-1])
            s2 = np.add.reduceat(_mix2(atom_u), bounds_g[:-1])
        cnt = (bounds_g[1:] - bounds_g[:-1]).astype(np.int64)

        old = blocks[aff]
        ref_match = (s1 == sig1[aff]) & (s2 == sig2[aff]) & (cnt == sigc[aff])
        # subgroups: states with equal (old block, new signature)
        rows = np.stack([old.astype(np.uint64), s1, s2, cnt.astype(np.uint64)], axis=1)
        urows, gid = np.unique(rows, axis=0, return_inverse=True)
        n_groups = len(urows)
        gid_old = urows[:, 0].astype(np.int64)
        gid_size = np.bincount(gid, minlength=n_groups)
        gid_ref = np.zeros(n_groups, dtype=bool)
        np.logical_or.at(gid_ref, gid, ref_match)
        # how many members of each old block were recomputed this round
        aff_old_ids, aff_old_counts = np.unique(old, return_counts=True)
        recomputed_of = dict(zip(aff_old_ids.tolist(), aff_old_counts.tolist()))

        # choose, per old block, the subgroup that keeps the id
        keeper = np.zeros(n_groups, dtype=bool)
        by_old: dict[int, list[int]] = {}
        for gi in range(n_groups):
            by_old.setdefault(int(gid_old[gi]), []).append(gi)
        for b, gis in by_old.items():
            matched = [gi for gi in gis if gid_ref[gi]]
            if matched:
                keeper[matched[0]] = True
            elif recomputed_of[b] == int(block_size[b]):
                best = max(gis, key=lambda gi: (int(gid_size[gi]), -gi))
                keeper[best] = True
            # else: unrecomputed members hold the block id
        new_id_of = np.empty(n_groups, dtype=np.int64)
        for gi in range(n_groups):
            if keeper[gi]:
                new_id_of[gi] = gid_old[gi]
            else:
                new_id_of[gi] = next_block
                next_block += 1
        if next_block >= len(block_size):
            block_size = np.concatenate(
                [block_size, np.zeros(len(block_size) + n, dtype=np.int64)])

        new_blocks_aff = new_id_of[gid]
        moved_mask = new_blocks_aff != old
        sig1[aff] = s1
        sig2[aff] = s2
        sigc[aff] = cnt
        if not moved_mask.any():
            break
        moved = aff[moved_mask]
        np.subtract.at(block_size, old[moved_mask], 1)
        np.add.at(block_size, new_blocks_aff[moved_mask], 1)
        blocks[moved] = new_blocks_aff[moved_mask]
        changed = moved
    uniq, compact = np.unique(blocks, return_inverse=True)
    return compact.astype(np.int64), len(uniq)


def weak_bisimilar(l1: ExplicitLts, l2: ExplicitLts,
                   find_counterexample: bool = True) -> BisimResult:
    """Decide weak bisimilarity of the initial states of two finite LTSs.

    On inequivalence, attempts to extract a distinguishing observable trace
    (one the hidden-label-saturated semantics of exactly one side executes).
    """
    sat = _Saturated(l1, l2)
    n = sat.n
    src = np.concatenate([sat.wsrc, sat.cl[:, 0]])
    lab = np.concatenate(
        [sat.wlab, np.full(len(sat.cl), sat.theta_id, dtype=np.int64)])
    tgt = np.concatenate([sat.wtgt, sat.cl[:, 1]])
    blocks, n_blocks = _refine_partition(n, src, lab, tgt)

    init2 = sat.n1 + l2.initial
    result = BisimResult(
        equivalent=bool(blocks[l1.initial] == blocks[init2]),
        n_blocks=n_blocks,
        blocks=blocks,
        offset=sat.n1,
    )
    if not result.equivalent and find_counterexample:
        trace, side = _trace_counterexample(sat, l1.initial, init2)
        result.counterexample = trace
        result.counterexample_side = side
    return result


def _weak_successor_csr(sat: _Saturated):
    order = np.lexsort((sat.wlab, sat.wsrc))
    src = sat.wsrc[order]
    lab = sat.wlab[order]
    tgt = sat.wtgt[order]
    bounds = np.searchsorted(src, np.arange(sat.n + 1))
    return lab, tgt, bounds


def _trace_counterexample(sat: _Saturated, init1: int, init2: int,
                          max_nodes: int = 200_000):
    """Breadth-first search over determinized weak-successor sets for a label
    sequence executable in exactly one of the two systems."""
    lab, tgt, bounds = _weak_successor_csr(sat)

    def successors(stateset: frozenset) -> dict[int, frozenset]:
        out: dict[int, set[int]] = {}
        for s in stateset:
            for k in range(bounds[s], bounds[s + 1]):
                out.setdefault(int(lab[k]), set()).add(int(tgt[k]))
        return {a: frozenset(v) for a, v in out.items()}

    start = (frozenset([init1]), frozenset([init2]))
    seen = {start}
    queue = deque([(start, [])])
    while queue and len(seen) < max_nodes:
        (s1, s2), path = queue.popleft()
        succ1 = successors(s1)
        succ2 = successors(s2)
        for a in sorted(set(succ1) | set(succ2)):
            names = [sat.obs_names[x] for x in path + [a]]
            n1, n2 = succ1.get(a), succ2.get(a)
            if n1 is None:
                return names, 2
            if n2 is None:
                return names, 1
            nxt = (n1, n2)
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, path + [a]))
    return None, None


def distinguishing_trace(sys1: CompositeSystem, sys2: CompositeSystem,
                         unobservable1: Iterable[str] = (),
                         unobservable2: Iterable[str] = (),
                         max_nodes: int = 100_000):
    """Search for an observable label sequence weakly executable in exactly
    one of the two systems.

    Works directly on the operational semantics (subset simulation with
    hidden-move closure), so it needs no prior state-space exploration and
    is sound even when a system's full space is unbounded.  Returns
    (labels, side) where side is the system that can execute the trace, or
    (None, None) if no difference was found within the node budget.
    """
    cs1, cs2 = compile_system(sys1), compile_system(sys2)
    h1, h2 = frozenset(unobservable1), frozenset(unobservable2)

    def closure(cs, hidden, states: frozenset) -> frozenset:
        seen = set(states)
        stack = list(states)
        while stack:
            s = stack.pop()
            for ci in cs.enabled(s):
                if label_name(ci.label) in hidden:
                    t, _ = cs.fire(s, ci)
                    if t not in seen:
                        seen.add(t)
                        stack.append(t)
        return frozenset(seen)

    def successors(cs, hidden, states: frozenset) -> dict[str, frozenset]:
        out: dict[str, set] = {}
        for s in states:
            for ci in cs.enabled(s):
                name = label_name(ci.label)
                if name in hidden:
                    continue
                t, _ = cs.fire(s, ci)
                out.setdefault(name, set()).add(t)
        return {k: closure(cs, hidden, frozenset(v)) for k, v in out.items()}

    start = (closure(cs1, h1, frozenset([cs1.initial()])),
             closure(cs2, h2, frozenset([cs2.initial()])))
    seen = {start}
    queue = deque([(start, [])])
    while queue and len(seen) < max_nodes:
        (a, b), path = queue.popleft()
        succ1 = successors(cs1, h1, a)
        succ2 = successors(cs2, h2, b)
        for name in sorted(set(succ1) | set(succ2)):
            na, nb = succ1.get(name), succ2.get(name)
            if na is None:
                return path + [name], 2
            if nb is None:
                return path + [name], 1
            node = (na, nb)
            if node not in seen:
                seen.add(node)
                queue.append((node, path + [name]))
    return None, None


def weak_trace_executable(lts: ExplicitLts, labels: Sequence[str]) -> bool:
    """Whether the LTS can weakly execute the observable label sequence."""
    dummy = ExplicitLts(1, (), np.empty((0, 3), dtype=np.int64))
    sat = _Saturated(lts, dummy)
    lab, tgt, bounds = _weak_successor_csr(sat)
    name_id = {s: i for i, s in enumerate(sat.obs_names)}
    current = {lts.initial}
    for name in labels:
        a = name_id.get(name)
        if a is None:
            return False
        nxt = set()
        for s in current:
            for k in range(bounds[s], bounds[s + 1]):
                if lab[k] == a:
                    nxt.add(int(tgt[k]))
        if not nxt:
            return False
        current = nxt
    return True
