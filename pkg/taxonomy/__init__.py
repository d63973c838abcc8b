"""
Class tree package
"""

from taxonomy.class_tree import (
    ClassTree,
    TreeNode,
    ancestors,
    family_map,
    lca_height,
    level_groups,
    load_tree,
    parse_tree,
    random_swap_tree,
    serialize_tree,
    shorten_to_height,
)

__all__ = [
    'ClassTree',
    'TreeNode',
    'ancestors',
    'family_map',
    'lca_height',
    'level_groups',
    'load_tree',
    'parse_tree',
    'random_swap_tree',
    'serialize_tree',
    'shorten_to_height',
]
