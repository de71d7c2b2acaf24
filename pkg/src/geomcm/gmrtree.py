"""GMR-Tree: an R-Tree whose entries also carry superimposed concept signatures.

A signature is an ``ell``-bit mask stored as a Python int. An object's
signature marks the concepts whose posterior reaches ``tau`` (folded modulo
``ell``); every entry above it stores the OR of everything beneath, so a query
whose bits are not all present in an entry can skip that whole subtree
without losing any object whose own signature covers the query bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from .model import Dataset, FeatureVector, GeoObject, GeoPoint, Modality, SemanticVector
from .scoring import Mbr, union_all

FORMAT_VERSION = 1
DEFAULT_FANOUT = 32
DEFAULT_SIG_LENGTH = 64


# --------------------------------------------------------------------------
# Signatures


@dataclass(frozen=True)
class Signature:
    bits: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("signature length must be >= 1")
        if self.bits < 0 or self.bits >> self.length:
            raise ValueError("bits outside the signature length")

    @classmethod
    def zeros(cls, length: int) -> "Signature":
        return cls(0, length)

    @classmethod
    def from_string(cls, s: str) -> "Signature":
        """Parse a bit string written with bit 0 first, e.g. ``"0101"`` sets bits 1 and 3."""
        return cls(sum(1 << i for i, c in enumerate(s) if c == "1"), len(s))

    def set_bits(self) -> list[int]:
        return [i for i in range(self.length) if self.bits >> i & 1]

    def __str__(self) -> str:
        return "".join("1" if self.bits >> i & 1 else "0" for i in range(self.length))


def default_tau(class_count: int) -> float:
    tau = 2.0 / class_count
    return tau if tau < 1.0 else 0.5


def signature_bits(probabilities: np.ndarray, ell: int, tau: float) -> int:
    bits = 0
    for i in np.flatnonzero(probabilities >= tau):
        bits |= 1 << (int(i) % ell)
    return bits


def object_signature(sv, ell: int, tau: float) -> Signature:
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    p = sv.probabilities if isinstance(sv, SemanticVector) else np.asarray(sv, dtype=np.float64)
    return Signature(signature_bits(p, ell, tau), ell)


def superimpose(sigs: Iterable[Signature], length: Optional[int] = None) -> Signature:
    sigs = list(sigs)
    if not sigs:
        if length is None:
            raise ValueError("length required to superimpose an empty sequence")
        return Signature.zeros(length)
    ell = sigs[0].length if length is None else length
    bits = 0
    for s in sigs:
        if s.length != ell:
            raise ValueError(f"signature length mismatch: {s.length} vs {ell}")
        bits |= s.bits
    return Signature(bits, ell)


def signature_matches(query: Signature, node: Signature) -> bool:
    if query.length != node.length:
        raise ValueError(f"signature length mismatch: {query.length} vs {node.length}")
    return query.bits & node.bits == query.bits


# --------------------------------------------------------------------------
# Tree structure


@dataclass
class GmrEntry:
    box: Mbr
    sig: int
    child: Union["GmrNode", int]  # node for internal entries, object id for leaf entries


@dataclass
class GmrNode:
    level: int
    entries: list = field(default_factory=list)
    node_id: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.level == 0

    def box(self) -> Mbr:
        return union_all(e.box for e in self.entries)

    def sig(self) -> int:
        bits = 0
        for e in self.entries:
            bits |= e.sig
        return bits


@dataclass(frozen=True)
class TreeParams:
    fanout_max: int = DEFAULT_FANOUT
    fanout_min: Optional[int] = None
    sig_length: int = DEFAULT_SIG_LENGTH
    tau: Optional[float] = None

    def resolved(self, class_count: int) -> "TreeParams":
        m = self.fanout_min if self.fanout_min is not None else self.fanout_max // 2
        tau = self.tau if self.tau is not None else default_tau(class_count)
        if self.fanout_max < 2 or not 1 <= m <= self.fanout_max // 2:
            raise ValueError(f"need 1 <= m <= M/2, got m={m}, M={self.fanout_max}")
        if self.sig_length < 1 or not 0.0 < tau < 1.0:
            raise ValueError("need ell >= 1 and 0 < tau < 1")
        return TreeParams(self.fanout_max, m, self.sig_length, tau)


class GmrTree:
    """Height-balanced R-Tree over geo-multimedia objects with signature-carrying entries.

    Objects must carry semantic vectors; the object store keeps them, together
    with unit-normalized semantic rows used for cosine scoring.
    """

    def __init__(self, class_count: int, params: TreeParams = TreeParams()):
        self.class_count = class_count
        self.params = params.resolved(class_count)
        self.root = GmrNode(level=0)
        self.objects: dict[int, GeoObject] = {}
        self.object_sigs: dict[int, int] = {}
        self._next_node_id = 0
        self.root.node_id = self._new_node_id()
        self._units: Optional[dict] = None

    # parameters under their short names
    @property
    def fanout_max(self) -> int:
        return self.params.fanout_max

    @property
    def fanout_min(self) -> int:
        return self.params.fanout_min

    @property
    def ell(self) -> int:
        return self.params.sig_length

    @property
    def tau(self) -> float:
        return self.params.tau

    def __len__(self) -> int:
        return len(self.objects)

    def _new_node_id(self) -> int:
        self._next_node_id += 1
        return self._next_node_id - 1

    def height(self) -> int:
        return self.root.level + 1

    def root_box(self) -> Mbr:
        if not self.root.entries:
            raise ValueError("empty tree has no bounding box")
        return self.root.box()

    def signature_of(self, sv) -> Signature:
        return object_signature(sv, self.ell, self.tau)

    def unit_semantic(self, object_id: int) -> np.ndarray:
        if self._units is None:
            self._units = {}
        u = self._units.get(object_id)
        if u is None:
            u = unit_rows(self.objects[object_id].semantic.probabilities[None, :])[0]
            self._units[object_id] = u
        return u

    def _check_new(self, obj: GeoObject) -> int:
        if obj.id in self.objects:
            raise ValueError(f"object id {obj.id} already indexed")
        if obj.semantic is None:
            raise ValueError(f"object {obj.id} has no semantic vector")
        if len(obj.semantic) != self.class_count:
            raise ValueError(f"object {obj.id} semantic length {len(obj.semantic)} != {self.class_count}")
        if not GeoPoint(*obj.location).is_finite:
            raise ValueError(f"object {obj.id} has a non-finite location")
        return signature_bits(obj.semantic.probabilities, self.ell, self.tau)

    # ---------------------------------------------------------------- insert

    def insert(self, obj: GeoObject) -> "GmrTree":
        sig = self._check_new(obj)
        self.objects[obj.id] = obj
        self.object_sigs[obj.id] = sig
        self._units = None
        entry = GmrEntry(Mbr.of_point(obj.location), sig, obj.id)
        split = self._insert(self.root, entry)
        if split is not None:
            old = self.root
            self.root = GmrNode(old.level + 1, [
                GmrEntry(old.box(), old.sig(), old),
                GmrEntry(split.box(), split.sig(), split),
            ], self._new_node_id())
        return self

    def _insert(self, node: GmrNode, entry: GmrEntry) -> Optional[GmrNode]:
        if node.is_leaf:
            node.entries.append(entry)
        else:
            i = self._choose_subtree(node, entry.box)
            target = node.entries[i]
            split = self._insert(target.child, entry)
            target.box = target.box.union(entry.box) if split is None else target.child.box()
            target.sig |= entry.sig
            if split is not None:
                target.sig = target.child.sig()
                node.entries.append(GmrEntry(split.box(), split.sig(), split))
        if len(node.entries) > self.fanout_max:
            return self._split(node)
        return None

    @staticmethod
    def _choose_subtree(node: GmrNode, box: Mbr) -> int:
        best, best_key = 0, None
        for i, e in enumerate(node.entries):
            area = e.box.area()
            key = (e.box.union(box).area() - area, area, i)
            if best_key is None or key < best_key:
                best, best_key = i, key
        return best

    def _split(self, node: GmrNode) -> GmrNode:
        """Guttman quadratic split; ``node`` keeps one group, the returned sibling the other."""
        entries = node.entries
        m = self.fanout_min
        # pick seeds: pair wasting the most area
        worst, s1, s2 = -math.inf, 0, 1
        for i in range(len(entries)):
            bi = entries[i].box
            ai = bi.area()
            for j in range(i + 1, len(entries)):
                bj = entries[j].box
                d = bi.union(bj).area() - ai - bj.area()
                if d > worst:
                    worst, s1, s2 = d, i, j
        g1, g2 = [entries[s1]], [entries[s2]]
        b1, b2 = entries[s1].box, entries[s2].box
        rest = [e for k, e in enumerate(entries) if k != s1 and k != s2]
        while rest:
            if len(g1) + len(rest) == m:
                g1.extend(rest)
                break
            if len(g2) + len(rest) == m:
                g2.extend(rest)
                break
            # pick next: strongest preference for one group
            best_k, best_diff, d1b, d2b = 0, -1.0, 0.0, 0.0
            a1, a2 = b1.area(), b2.area()
            for k, e in enumerate(rest):
                d1 = b1.union(e.box).area() - a1
                d2 = b2.union(e.box).area() - a2
                diff = abs(d1 - d2)
                if diff > best_diff:
                    best_k, best_diff, d1b, d2b = k, diff, d1, d2
            e = rest.pop(best_k)
            if (d1b, a1, len(g1)) <= (d2b, a2, len(g2)):
                g1.append(e)
                b1 = b1.union(e.box)
            else:
                g2.append(e)
                b2 = b2.union(e.box)
        node.entries = g1
        return GmrNode(node.level, g2, self._new_node_id())

    # ------------------------------------------------------------- traversal

    def nodes(self):
        """Preorder walk over all nodes."""
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            if not n.is_leaf:
                stack.extend(reversed([e.child for e in n.entries]))

    def leaf_entries(self):
        for n in self.nodes():
            if n.is_leaf:
                yield from n.entries

    def locate(self, p) -> list[int]:
        """Ids of objects located exactly at ``p``."""
        out = []
        stack = [self.root]
        while stack:
            n = stack.pop()
            for e in n.entries:
                if e.box.contains_point(p):
                    if n.is_leaf:
                        out.append(e.child)
                    else:
                        stack.append(e.child)
        return sorted(out)


def unit_rows(M: np.ndarray) -> np.ndarray:
    """Rows scaled to unit length; every caller goes through here so cosine values agree bitwise."""
    M = np.asarray(M, dtype=np.float64)
    norms = np.sqrt((M * M).sum(axis=1))
    if (norms == 0).any():
        raise ValueError("zero semantic vector")
    return M / norms[:, None]


# --------------------------------------------------------------------------
# Bulk loading (sort-tile-recursive)


def _even_sizes(n: int, parts: int) -> list[int]:
    q, r = divmod(n, parts)
    return [q + 1 if i < r else q for i in range(parts)]


def _str_pack(tree: GmrTree, entries: list, level: int) -> list:
    """Pack one level; every node gets floor or ceil of n / ceil(n / M) entries."""
    n = len(entries)
    M = tree.fanout_max
    parts = math.ceil(n / M)
    sizes = _even_sizes(n, parts)
    slices = math.ceil(math.sqrt(parts))
    per_slice = _even_sizes(parts, slices)
    cx = [(e.box.minx + e.box.maxx) / 2 for e in entries]
    cy = [(e.box.miny + e.box.maxy) / 2 for e in entries]
    order = sorted(range(n), key=lambda i: (cx[i], cy[i], i))
    out, pos, node_i = [], 0, 0
    for ns in per_slice:
        count = sum(sizes[node_i:node_i + ns])
        chunk = sorted(order[pos:pos + count], key=lambda i: (cy[i], cx[i], i))
        cpos = 0
        for s in sizes[node_i:node_i + ns]:
            node = GmrNode(level, [entries[i] for i in chunk[cpos:cpos + s]], tree._new_node_id())
            out.append(GmrEntry(node.box(), node.sig(), node))
            cpos += s
        pos += count
        node_i += ns
    return out


def bulk_load(ds: Union[Dataset, Iterable[GeoObject]], class_count: Optional[int] = None,
              params: TreeParams = TreeParams()) -> GmrTree:
    objs = list(ds)
    if not objs:
        raise ValueError("cannot bulk load an empty dataset")
    if class_count is None:
        class_count = getattr(ds, "class_count", None) or (len(objs[0].semantic) if objs[0].semantic is not None else None)
    if class_count is None:
        raise ValueError("objects carry no semantic vectors")
    tree = GmrTree(class_count, params)
    tree._next_node_id = 0
    entries = []
    for o in objs:
        sig = tree._check_new(o)
        tree.objects[o.id] = o
        tree.object_sigs[o.id] = sig
        entries.append(GmrEntry(Mbr.of_point(o.location), sig, o.id))
    level = 0
    while len(entries) > tree.fanout_max:
        entries = _str_pack(tree, entries, level)
        level += 1
    tree.root = GmrNode(level, entries, tree._new_node_id())
    return tree


def build_by_insert(objs: Iterable[GeoObject], class_count: int, params: TreeParams = TreeParams()) -> GmrTree:
    tree = GmrTree(class_count, params)
    for o in objs:
        tree.insert(o)
    return tree


# --------------------------------------------------------------------------
# Audit


@dataclass(frozen=True)
class TreeViolation:
    node_id: int
    kind: str
    reason: str


def audit_tree(tree: GmrTree) -> list[TreeViolation]:
    out: list[TreeViolation] = []
    seen: dict[int, int] = {}
    m, M = tree.fanout_min, tree.fanout_max
    mask = (1 << tree.ell) - 1

    def walk(node: GmrNode, depth: int, is_root: bool):
        n = len(node.entries)
        if n > M:
            out.append(TreeViolation(node.node_id, "fanout", f"{n} entries > M={M}"))
        if not is_root and n < m:
            out.append(TreeViolation(node.node_id, "fanout", f"{n} entries < m={m}"))
        if is_root and not node.is_leaf and n < 2:
            out.append(TreeViolation(node.node_id, "fanout", "internal root with fewer than 2 entries"))
        for e in node.entries:
            if e.sig & ~mask:
                out.append(TreeViolation(node.node_id, "signature-length", "bits beyond ell"))
            if node.is_leaf:
                if not isinstance(e.child, (int, np.integer)):
                    out.append(TreeViolation(node.node_id, "structure", "leaf entry does not reference an object"))
                    continue
                if depth != tree.root.level:
                    out.append(TreeViolation(node.node_id, "depth", f"leaf at depth {depth}, expected {tree.root.level}"))
                oid = int(e.child)
                seen[oid] = seen.get(oid, 0) + 1
                obj = tree.objects.get(oid)
                if obj is None:
                    out.append(TreeViolation(node.node_id, "structure", f"object {oid} missing from store"))
                    continue
                if not e.box.contains(Mbr.of_point(obj.location)):
                    out.append(TreeViolation(node.node_id, "box-containment", f"object {oid} outside its entry box"))
                want = tree.object_sigs[oid]
                if e.sig & want != want:
                    out.append(TreeViolation(node.node_id, "signature-coverage", f"object {oid} bits not covered"))
            else:
                child = e.child
                if not isinstance(child, GmrNode):
                    out.append(TreeViolation(node.node_id, "structure", "internal entry does not reference a node"))
                    continue
                if child.level != node.level - 1:
                    out.append(TreeViolation(child.node_id, "depth", f"level {child.level} under level {node.level}"))
                if not child.entries:
                    out.append(TreeViolation(child.node_id, "fanout", "empty non-root node"))
                else:
                    if not e.box.contains(child.box()):
                        out.append(TreeViolation(node.node_id, "box-containment", f"child {child.node_id} escapes entry box"))
                    csig = child.sig()
                    if e.sig & csig != csig:
                        out.append(TreeViolation(node.node_id, "signature-coverage", f"child {child.node_id} bits not covered"))
                walk(child, depth + 1, False)

    walk(tree.root, 0, True)
    for oid, c in seen.items():
        if c > 1:
            out.append(TreeViolation(-1, "reachability", f"object {oid} reachable from {c} leaf entries"))
    missing = set(tree.objects) - set(seen)
    for oid in sorted(missing):
        out.append(TreeViolation(-1, "reachability", f"object {oid} not reachable"))
    return out


# --------------------------------------------------------------------------
# Persistence


def _sig_bytes(bits: int, nbytes: int) -> np.ndarray:
    return np.frombuffer(bits.to_bytes(nbytes, "little"), dtype=np.uint8)


def save_tree(tree: GmrTree, path) -> None:
    """Write header, preorder node records, and the object table into one ``.npz``."""
    nbytes = (tree.ell + 7) // 8
    levels, counts, node_ids = [], [], []
    boxes, sigs, refs = [], [], []
    for node in tree.nodes():
        levels.append(node.level)
        counts.append(len(node.entries))
        node_ids.append(node.node_id)
        for e in node.entries:
            boxes.append(tuple(e.box))
            sigs.append(_sig_bytes(e.sig, nbytes))
            refs.append(int(e.child) if node.is_leaf else -1)
    objs = list(tree.objects.values())
    modalities = {o.feature.modality for o in objs}
    if len(modalities) > 1 or len({o.feature.dim for o in objs}) > 1:
        raise ValueError("object table requires one modality and one feature dimension")
    header = {
        "format": "geomcm-gmrtree",
        "version": FORMAT_VERSION,
        "ell": tree.ell,
        "tau": tree.tau,
        "m": tree.fanout_min,
        "M": tree.fanout_max,
        "object_count": len(objs),
        "class_count": tree.class_count,
        "modality": (modalities.pop().value if modalities else Modality.IMAGE.value),
        "next_node_id": tree._next_node_id,
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header)),
            node_level=np.array(levels, dtype=np.int64),
            node_count=np.array(counts, dtype=np.int64),
            node_id=np.array(node_ids, dtype=np.int64),
            entry_box=np.array(boxes, dtype=np.float64).reshape(-1, 4),
            entry_sig=np.array(sigs, dtype=np.uint8).reshape(-1, nbytes),
            entry_ref=np.array(refs, dtype=np.int64),
            obj_id=np.array([o.id for o in objs], dtype=np.int64),
            obj_xy=np.array([tuple(o.location) for o in objs], dtype=np.float64).reshape(-1, 2),
            obj_label=np.array([-1 if o.label is None else o.label for o in objs], dtype=np.int64),
            obj_feature=np.array([o.feature.values for o in objs], dtype=np.float64).reshape(len(objs), -1),
            obj_semantic=np.array([o.semantic.probabilities for o in objs], dtype=np.float64).reshape(len(objs), -1),
        )


def load_tree(path) -> GmrTree:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != "geomcm-gmrtree":
            raise ValueError("not a GMR-Tree file")
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported index version {header.get('version')}")
        arrays = {k: z[k] for k in z.files if k != "header"}
    params = TreeParams(header["M"], header["m"], header["ell"], header["tau"])
    tree = GmrTree(header["class_count"], params)
    modality = Modality(header["modality"])
    for i, oid in enumerate(arrays["obj_id"].tolist()):
        label = int(arrays["obj_label"][i])
        x, y = arrays["obj_xy"][i].tolist()
        obj = GeoObject(
            oid, GeoPoint(x, y), FeatureVector(modality, arrays["obj_feature"][i]),
            SemanticVector(arrays["obj_semantic"][i]), None if label < 0 else label,
        )
        tree.objects[oid] = obj
        tree.object_sigs[oid] = signature_bits(obj.semantic.probabilities, tree.ell, tree.tau)
    if len(tree.objects) != header["object_count"]:
        raise ValueError("object table size disagrees with header")

    levels = arrays["node_level"].tolist()
    counts = arrays["node_count"].tolist()
    node_ids = arrays["node_id"].tolist()
    boxes = arrays["entry_box"].tolist()
    sigs = [int.from_bytes(row.tobytes(), "little") for row in arrays["entry_sig"]]
    refs = arrays["entry_ref"].tolist()
    pos = {"node": 0, "entry": 0}

    def read_node() -> GmrNode:
        i = pos["node"]
        pos["node"] += 1
        node = GmrNode(levels[i], [], node_ids[i])
        start = pos["entry"]
        pos["entry"] += counts[i]
        for j in range(start, start + counts[i]):
            node.entries.append(GmrEntry(Mbr(*boxes[j]), sigs[j], refs[j]))
        if not node.is_leaf:
            # children follow in preorder
            for e in node.entries:
                e.child = read_node()
        return node

    tree.root = read_node()
    tree._next_node_id = header["next_node_id"]
    return tree
