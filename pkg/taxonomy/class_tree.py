"""
Class Tree
Instrument hierarchy used for metaprototype aggregation, hierarchical targets
and mistake-severity scoring
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import TreeError

logger = logging.getLogger(__name__)

TREES_DIR = Path(__file__).parent / "trees"
BUNDLED_TREES = {
    "hornbostel_sachs": TREES_DIR / "hornbostel_sachs.json",
    "synthetic": TREES_DIR / "synthetic.json",
}

LeafRef = Union[int, str]


@dataclass(frozen=True)
class TreeNode:
    """A node of the class tree; ids are dense and assigned in document order"""
    id: int
    name: str
    level: int
    parent: Optional[int]


@dataclass(frozen=True)
class ClassTree:
    """
    Immutable class hierarchy T with height H

    Leaves sit at level 0 and the broadest families at level H. The document root
    sits one level above, at H+1; it joins the top families but is not a class
    level. A flat tree (H=0) is a root whose children are all the leaves.
    """
    nodes: Tuple[TreeNode, ...]
    height: int

    leaf_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    _children: Dict[int, Tuple[int, ...]] = field(init=False, repr=False, compare=False)
    _chains: Dict[int, Tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.nodes:
            raise TreeError("empty tree")

        children: Dict[int, List[int]] = {node.id: [] for node in self.nodes}
        roots = []
        for position, node in enumerate(self.nodes):
            if node.id != position:
                raise TreeError(f"node ids must be dense and ordered; got id {node.id} at {position}")
            if node.parent is None:
                roots.append(node.id)
            else:
                if node.parent not in children:
                    raise TreeError(f"node '{node.name}' has unknown parent {node.parent}")
                children[node.parent].append(node.id)

        if len(roots) != 1:
            raise TreeError(f"tree must have exactly one root, found {len(roots)}")

        root = self.nodes[roots[0]]
        if self.height < 0:
            raise TreeError(f"tree height must be non-negative, got {self.height}")
        if root.level != self.height + 1:
            raise TreeError(f"root '{root.name}' is at level {root.level}, expected {self.height + 1}")

        leaf_index: Dict[str, int] = {}
        level_names: Dict[int, set] = {}
        for node in self.nodes:
            is_leaf = not children[node.id]
            if node.parent is not None and self.nodes[node.parent].level != node.level + 1:
                raise TreeError(
                    f"node '{node.name}' at level {node.level} has parent at level "
                    f"{self.nodes[node.parent].level}"
                )
            if is_leaf:
                if node.level != 0:
                    raise TreeError(f"node '{node.name}' has no children but sits at level {node.level}")
                if node.name in leaf_index:
                    raise TreeError(f"duplicate leaf name '{node.name}'")
                leaf_index[node.name] = node.id
            else:
                if node.level == 0:
                    raise TreeError(f"level-0 node '{node.name}' has children")
                names = level_names.setdefault(node.level, set())
                if node.name in names:
                    raise TreeError(f"duplicate internal node name '{node.name}' at level {node.level}")
                names.add(node.name)

        chains: Dict[int, Tuple[int, ...]] = {}
        for leaf_id in leaf_index.values():
            chain = [leaf_id]
            while self.nodes[chain[-1]].parent is not None:
                chain.append(self.nodes[chain[-1]].parent)
            chains[leaf_id] = tuple(chain)

        object.__setattr__(self, "leaf_index", leaf_index)
        object.__setattr__(self, "_children", {k: tuple(v) for k, v in children.items()})
        object.__setattr__(self, "_chains", chains)

    # ------------------------------------------------------------------ queries

    @property
    def root(self) -> int:
        return next(node.id for node in self.nodes if node.parent is None)

    @property
    def flat(self) -> bool:
        return self.height == 0

    @property
    def leaves(self) -> Tuple[int, ...]:
        """Leaf ids in document order"""
        return tuple(node.id for node in self.nodes if not self._children[node.id])

    @property
    def leaf_names(self) -> Tuple[str, ...]:
        return tuple(self.nodes[i].name for i in self.leaves)

    def node(self, node_id: int) -> TreeNode:
        try:
            return self.nodes[node_id]
        except (IndexError, TypeError):
            raise TreeError(f"unknown node id {node_id!r}") from None

    def name(self, node_id: int) -> str:
        return self.node(node_id).name

    def level(self, node_id: int) -> int:
        return self.node(node_id).level

    def children(self, node_id: int) -> Tuple[int, ...]:
        self.node(node_id)
        return self._children[node_id]

    def is_leaf(self, node_id: int) -> bool:
        return node_id in self._chains

    def nodes_at_level(self, h: int) -> Tuple[int, ...]:
        return tuple(node.id for node in self.nodes if node.level == h)

    def leaf_id(self, name: str) -> int:
        try:
            return self.leaf_index[name]
        except KeyError:
            raise TreeError(f"'{name}' is not a leaf of the tree") from None

    def resolve_leaf(self, leaf: LeafRef) -> int:
        """Accept a leaf id or leaf name and return the leaf id"""
        if isinstance(leaf, str):
            return self.leaf_id(leaf)
        leaf_id = int(leaf)
        if leaf_id not in self._chains:
            raise TreeError(f"node {leaf!r} is not a leaf")
        return leaf_id

    def chain(self, leaf: LeafRef) -> Tuple[int, ...]:
        """Ancestor chain from the leaf up to and including the root"""
        return self._chains[self.resolve_leaf(leaf)]

    def leaves_under(self, node_id: int) -> FrozenSet[int]:
        self.node(node_id)
        level = self.nodes[node_id].level
        return frozenset(
            leaf for leaf, chain in self._chains.items()
            if level < len(chain) and chain[level] == node_id
        )

    def ancestors(self, leaf: LeafRef) -> List[int]:
        return ancestors(self, leaf)

    def lca_height(self, leaf_a: LeafRef, leaf_b: LeafRef) -> int:
        return lca_height(self, leaf_a, leaf_b)

    def level_groups(self, h: int, present_leaves: Iterable[LeafRef]) -> Dict[int, FrozenSet[int]]:
        return level_groups(self, h, present_leaves)

    def with_leaf_names(self, names_by_slot: Mapping[int, str]) -> "ClassTree":
        """
        Return a copy with leaf names replaced; structure and ids are unchanged

        Pass-through nodes padding a renamed leaf are renamed along with it.
        """
        renamed: Dict[int, str] = {}
        for slot, new_name in names_by_slot.items():
            chain = self.chain(slot)
            old_name = self.nodes[chain[0]].name
            renamed[chain[0]] = new_name
            for node_id in chain[1:]:
                node = self.nodes[node_id]
                if node.name != passthrough_name(old_name, node.level):
                    break
                renamed[node_id] = passthrough_name(new_name, node.level)

        nodes = tuple(
            replace(node, name=renamed[node.id]) if node.id in renamed else node
            for node in self.nodes
        )
        return ClassTree(nodes=nodes, height=self.height)

    def describe(self) -> str:
        counts = [len(self.nodes_at_level(h)) for h in range(self.nodes[self.root].level + 1)]
        kind = "flat" if self.flat else f"H={self.height}"
        return f"ClassTree({kind}, nodes per level {counts})"

    # ------------------------------------------------------------ serialization

    def to_document(self) -> Dict:
        """Nested JSON-ready mapping; parse_tree(to_document(t)) == t"""

        def render(node_id: int):
            kids = self._children[node_id]
            if all(not self._children[k] for k in kids):
                return [self.nodes[k].name for k in kids]
            return {self.nodes[k].name: render(k) for k in kids}

        return {self.nodes[self.root].name: render(self.root)}

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_document(), indent=indent)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        logger.info(f"Class tree saved to {path}")
        return path


# ---------------------------------------------------------------------- parsing


def passthrough_name(leaf: str, level: int) -> str:
    return f"{leaf}@h{level}"


def parse_tree(document: Union[str, bytes, Mapping]) -> ClassTree:
    """
    Parse a hierarchy document into a normalized ClassTree

    The single top-level key is the root; each internal node maps to either an
    array of leaf names or a nested object. The height is the number of family
    levels between the leaves and the root, so {"root": [...]} is flat. Leaves
    at different depths are padded with single-child pass-through nodes named
    '<leaf>@h<level>' so every leaf reaches level 0.

    Args:
        document: JSON text or an already decoded mapping

    Returns:
        ClassTree satisfying all invariants
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise TreeError(f"hierarchy document is not valid JSON: {exc}") from exc

    if not isinstance(document, Mapping) or not document:
        raise TreeError("empty tree")
    if len(document) != 1:
        raise TreeError(f"hierarchy must have a single top-level key (the root), found {len(document)}")

    root_name, body = next(iter(document.items()))
    seen_leaves: set = set()
    leaf_depths: List[int] = []
    _scan(str(root_name), body, depth=0, path=(), seen_leaves=seen_leaves, leaf_depths=leaf_depths)

    root_level = max(leaf_depths)
    nodes: List[TreeNode] = []

    def emit(name: str, level: int, parent: Optional[int]) -> int:
        nodes.append(TreeNode(id=len(nodes), name=name, level=level, parent=parent))
        return len(nodes) - 1

    def build(name: str, content, depth: int, parent: Optional[int]):
        node_id = emit(name, root_level - depth, parent)
        items = content if isinstance(content, list) else list(content.items())
        for item in items:
            if isinstance(content, list):
                parent_id = node_id
                for level in range(root_level - depth - 1, 0, -1):
                    parent_id = emit(passthrough_name(item, level), level, parent_id)
                emit(item, 0, parent_id)
            else:
                child_name, child_body = item
                build(str(child_name), child_body, depth + 1, node_id)

    build(str(root_name), body, 0, None)
    return ClassTree(nodes=tuple(nodes), height=root_level - 1)


def _scan(name: str, body, depth: int, path: Tuple[str, ...], seen_leaves: set, leaf_depths: List[int]):
    if name in path:
        raise TreeError(f"cycle: internal node '{name}' appears below itself ({' -> '.join(path + (name,))})")
    path = path + (name,)

    if isinstance(body, list):
        if not body:
            raise TreeError(f"internal node '{name}' has no children")
        for leaf in body:
            if not isinstance(leaf, str) or not leaf:
                raise TreeError(f"leaves of '{name}' must be non-empty strings, got {leaf!r}")
            if leaf in seen_leaves:
                raise TreeError(f"duplicate leaf name '{leaf}'")
            seen_leaves.add(leaf)
            leaf_depths.append(depth + 1)
    elif isinstance(body, Mapping):
        if not body:
            raise TreeError(f"internal node '{name}' has no children")
        for child_name, child_body in body.items():
            _scan(str(child_name), child_body, depth + 1, path, seen_leaves, leaf_depths)
    else:
        raise TreeError(f"node '{name}' must map to an array or an object, got {type(body).__name__}")


def serialize_tree(tree: ClassTree) -> str:
    return tree.to_json()


def load_tree(source: Union[str, Path]) -> ClassTree:
    """
    Load a bundled tree by name ('hornbostel_sachs', 'synthetic') or a JSON file path
    """
    path = BUNDLED_TREES.get(str(source), Path(source))
    if not path.exists():
        raise TreeError(f"hierarchy file not found: {source}")
    tree = parse_tree(path.read_text(encoding="utf-8"))
    logger.debug(f"Loaded {tree.describe()} from {path}")
    return tree


# ------------------------------------------------------------------- operations


def ancestors(tree: ClassTree, leaf: LeafRef) -> List[int]:
    """Ancestor ids at levels 0..H; position 0 is the leaf itself, the root is excluded"""
    return list(tree.chain(leaf)[: tree.height + 1])


def lca_height(tree: ClassTree, leaf_a: LeafRef, leaf_b: LeafRef) -> int:
    """
    Level of the lowest common ancestor of two leaves

    0 when they are equal; H+1 when they only meet at the root, so every
    mistake of a flat tree scores 1.
    """
    chain_a, chain_b = tree.chain(leaf_a), tree.chain(leaf_b)
    for h, (a, b) in enumerate(zip(chain_a, chain_b)):
        if a == b:
            return h
    raise TreeError("leaves share no ancestor")  # unreachable for a rooted tree


def level_groups(tree: ClassTree, h: int, present_leaves: Iterable[LeafRef]) -> Dict[int, FrozenSet[int]]:
    """
    Group present level-(h-1) nodes under their level-h parents

    Returns:
        Mapping level-h node id -> member ids at level h-1, keys ascending
    """
    if not 1 <= h <= tree.height:
        raise TreeError(f"level {h} outside 1..{tree.height}")

    groups: Dict[int, set] = {}
    for leaf in present_leaves:
        chain = tree.chain(leaf)
        groups.setdefault(chain[h], set()).add(chain[h - 1])
    return {key: frozenset(groups[key]) for key in sorted(groups)}


def shorten_to_height(tree: ClassTree, target_height: int) -> ClassTree:
    """
    Remove every leaf's parent until the tree has the requested height

    Leaves are reattached to their grandparents at each removal, so the broadest
    families are kept. Height 1 keeps only the top families; height 0 yields
    the flat tree.
    """
    if target_height < 0 or target_height > tree.height:
        raise TreeError(f"cannot shorten a tree of height {tree.height} to {target_height}")
    if target_height == tree.height:
        return tree

    drop = tree.height - target_height
    document: Dict = {}
    for leaf in tree.leaves:
        leaf_name = tree.name(leaf)
        kept = tree.chain(leaf)[drop + 1:]
        names = [
            passthrough_name(leaf_name, tree.level(i) - drop)
            if tree.name(i) == passthrough_name(leaf_name, tree.level(i)) else tree.name(i)
            for i in reversed(kept)
        ]
        cursor = document
        for depth, name in enumerate(names):
            if depth == len(names) - 1:
                cursor.setdefault(name, []).append(leaf_name)
            else:
                cursor = cursor.setdefault(name, {})
    return parse_tree(document)


def random_swap_tree(tree: ClassTree, seed: int, swaps_per_leaf: int = 1000) -> ClassTree:
    """
    Permute leaf positions with random pairwise swaps

    Performs swaps_per_leaf swaps for every leaf; internal structure and node ids
    are untouched, only the names at leaf positions move.
    """
    slots = list(tree.leaves)
    if len(slots) < 2:
        return tree
    if swaps_per_leaf < 0:
        raise TreeError("swaps_per_leaf must be non-negative")

    names = [tree.name(slot) for slot in slots]
    rng = np.random.default_rng(seed)
    for a, b in rng.integers(0, len(slots), size=(len(slots) * swaps_per_leaf, 2)):
        names[a], names[b] = names[b], names[a]

    return tree.with_leaf_names(dict(zip(slots, names)))


def family_map(tree: ClassTree, level: int = 1, leaves: Optional[Sequence[str]] = None) -> Dict[str, str]:
    """Map leaf names to the name of their ancestor at the given level (H+1 is the root)"""
    if not 0 < level <= tree.height + 1:
        raise TreeError(f"family level {level} outside 1..{tree.height + 1}")
    names = leaves if leaves is not None else tree.leaf_names
    return {name: tree.name(tree.chain(name)[level]) for name in names}
