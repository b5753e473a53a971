"""Four-level rooted code tree with single-parent mappings and level projections."""

from dataclasses import dataclass, field

from .errors import (
    CycleDetected,
    DuplicateCode,
    LevelAboveCode,
    LevelSkip,
    MalformedRow,
    OrphanCode,
)

ROOT = "ROOT"
MAX_LEVEL = 4


@dataclass(frozen=True)
class TaxonomyNode:
    code: str
    level: int
    parent: str  # parent code, or ROOT for level-1 nodes
    name: str = ""


@dataclass
class TaxonomyTree:
    """Immutable rooted tree of codes at levels 1..4.

    Level-1 nodes hang off the ROOT sentinel; every deeper node has exactly
    one parent one level up.
    """

    nodes: dict[str, TaxonomyNode] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)

    def add(self, code, level, parent, name=""):
        if code == ROOT:
            raise DuplicateCode("ROOT is a reserved sentinel, not a code")
        if code in self.nodes:
            raise DuplicateCode(f"code {code!r} defined twice")
        self.nodes[code] = TaxonomyNode(code, level, parent, name)
        self.children.setdefault(parent, []).append(code)

    def validate(self):
        for node in self.nodes.values():
            if node.level < 1 or node.level > MAX_LEVEL:
                raise LevelSkip(f"code {node.code!r} has level {node.level} outside 1..{MAX_LEVEL}")
            if node.level == 1:
                if node.parent != ROOT:
                    raise LevelSkip(f"level-1 code {node.code!r} must have parent ROOT")
                continue
            parent = self.nodes.get(node.parent)
            if parent is None:
                raise OrphanCode(f"code {node.code!r} references unknown parent {node.parent!r}")
            if parent.level != node.level - 1:
                raise LevelSkip(
                    f"code {node.code!r} at level {node.level} has parent at level {parent.level}"
                )
        # parent levels strictly decrease, so any walk must hit ROOT in <= MAX_LEVEL steps
        for code in self.nodes:
            cur, steps = code, 0
            while cur != ROOT:
                cur = self.nodes[cur].parent
                steps += 1
                if steps > MAX_LEVEL:
                    raise CycleDetected(f"walk from {code!r} did not reach ROOT")
        return self

    def level_of(self, code) -> int:
        node = self.nodes.get(code)
        if node is None:
            raise OrphanCode(f"unknown code {code!r}")
        return node.level

    def ancestor_at_level(self, code, target_level) -> str:
        """Project a code onto a coarser level by repeated parent lookup."""
        node = self.nodes.get(code)
        if node is None:
            raise OrphanCode(f"unknown code {code!r}")
        if target_level > node.level:
            raise LevelAboveCode(
                f"target level {target_level} is below code {code!r} (level {node.level})"
            )
        while node.level > target_level:
            node = self.nodes[node.parent]
        return node.code

    def codes_at_level(self, level) -> set[str]:
        return {c for c, n in self.nodes.items() if n.level == level}


def load_taxonomy(path) -> TaxonomyTree:
    """Read and validate a taxonomy TSV with header code/parent/level/name."""
    tree = TaxonomyTree()
    with open(path, encoding="utf-8", newline="") as fh:
        header = None
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split("\t")
                if header[:3] != ["code", "parent", "level"]:
                    raise MalformedRow(f"{path}: unexpected taxonomy header {header!r}")
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise MalformedRow(f"{path}:{lineno}: expected at least 3 columns")
            code, parent, level_str = parts[0], parts[1], parts[2]
            name = parts[3] if len(parts) > 3 else ""
            try:
                level = int(level_str)
            except ValueError as exc:
                raise MalformedRow(f"{path}:{lineno}: bad level {level_str!r}") from exc
            tree.add(code, level, parent, name)
    return tree.validate()


def write_taxonomy(tree: TaxonomyTree, path, provenance=None):
    lines = []
    if provenance:
        lines.append(f"# {provenance}")
    lines.append("code\tparent\tlevel\tname")
    for code in sorted(tree.nodes, key=lambda c: (tree.nodes[c].level, c)):
        node = tree.nodes[code]
        lines.append(f"{node.code}\t{node.parent}\t{node.level}\t{node.name}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
