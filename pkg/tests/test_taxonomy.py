import pytest

from stratkit import errors
from stratkit.synth import SynthConfig, generate_taxonomy
from stratkit.taxonomy import ROOT, TaxonomyTree, load_taxonomy, write_taxonomy


def write_tsv(tmp_path, rows):
    path = tmp_path / "taxonomy.tsv"
    path.write_text("code\tparent\tlevel\tname\n" + "".join(f"{r}\n" for r in rows))
    return str(path)


class TestLoad:
    def test_minimal_two_level_fixture(self, tmp_path):
        tree = load_taxonomy(write_tsv(tmp_path, ["A\tROOT\t1\t", "A1\tA\t2\t"]))
        assert set(tree.nodes) == {"A", "A1"}
        assert tree.nodes["A1"].parent == "A"

    def test_level_skip(self, tmp_path):
        path = write_tsv(tmp_path, ["A\tROOT\t1\t", "X\tA\t3\t"])
        with pytest.raises(errors.LevelSkip):
            load_taxonomy(path)

    def test_duplicate_code(self, tmp_path):
        path = write_tsv(tmp_path, ["A\tROOT\t1\t", "A\tROOT\t1\t"])
        with pytest.raises(errors.DuplicateCode):
            load_taxonomy(path)

    def test_orphan(self, tmp_path):
        path = write_tsv(tmp_path, ["A1\tA\t2\t"])
        with pytest.raises(errors.OrphanCode):
            load_taxonomy(path)

    def test_level_out_of_range(self, tmp_path):
        path = write_tsv(tmp_path, ["A\tROOT\t5\t"])
        with pytest.raises(errors.LevelSkip):
            load_taxonomy(path)

    def test_roundtrip(self, tmp_path, tiny_tree):
        out = tmp_path / "out.tsv"
        write_taxonomy(tiny_tree, out)
        back = load_taxonomy(out)
        assert set(back.nodes) == set(tiny_tree.nodes)
        for code in tiny_tree.nodes:
            assert back.nodes[code].parent == tiny_tree.nodes[code].parent


class TestProjection:
    @pytest.fixture
    def tree(self):
        return generate_taxonomy(SynthConfig(branching=(3, 3, 3, 2)))

    def test_leaf_to_chapter(self, tree):
        assert tree.ancestor_at_level("C2.1.3.2", 1) == "C2"

    def test_identity(self, tree):
        assert tree.ancestor_at_level("C2.1.3", 3) == "C2.1.3"

    def test_leaf_to_level3(self, tree):
        assert tree.ancestor_at_level("C2.1.3.2", 3) == "C2.1.3"

    def test_level_above_code(self, tree):
        with pytest.raises(errors.LevelAboveCode):
            tree.ancestor_at_level("C1", 2)

    def test_projection_composes(self, tree):
        for code in tree.codes_at_level(4):
            via_l2 = tree.ancestor_at_level(tree.ancestor_at_level(code, 2), 1)
            assert tree.ancestor_at_level(code, 1) == via_l2

    def test_parent_mapping_total(self, tree):
        for level in (2, 3, 4):
            for code in tree.codes_at_level(level):
                assert tree.ancestor_at_level(code, level - 1) in tree.codes_at_level(level - 1)


class TestLevelSets:
    def test_two_by_two(self):
        tree = generate_taxonomy(SynthConfig(branching=(2, 2, 2, 2)))
        assert len(tree.codes_at_level(1)) == 2
        assert len(tree.nodes) == 2 + 4 + 8 + 16

    def test_leaf_count(self):
        tree = generate_taxonomy(SynthConfig(branching=(3, 3, 3, 2)))
        assert len(tree.codes_at_level(4)) == 54

    def test_singleton_chapter(self, tmp_path):
        tree = TaxonomyTree()
        tree.add("A", 1, ROOT)
        tree.validate()
        assert tree.codes_at_level(1) == {"A"}

    def test_edge_count(self):
        tree = generate_taxonomy(SynthConfig(branching=(3, 2, 2, 3)))
        n_edges = sum(1 for n in tree.nodes.values() if n.parent != ROOT)
        assert n_edges == len(tree.nodes) - len(tree.codes_at_level(1))
