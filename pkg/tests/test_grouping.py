import numpy as np
import pytest

from group_table import ATOM_COUNTS, GROUP_TABLE, group_count
from helpers import D, S, fixture, fixtures, molecule
from tiergraph.grouping import (
    DEFAULT_WEIGHTS,
    EmptyDataset,
    GroupKind,
    GroupWeightConfig,
    WeightCountMismatch,
    WeightMode,
    build_group_set,
    build_membership,
    group_report,
    group_stats,
    identify_functional_groups,
    identify_ring_groups,
)
from tiergraph.mol_graph import build_graph


def sets(groups):
    return sorted(sorted(g) for g in groups)


def groups_of(cid):
    return build_group_set(build_graph(fixture(cid)))


@pytest.mark.parametrize("cid", list(GROUP_TABLE))
def test_fixture_matches_table(cid):
    _, fgs, rgs, ccg = GROUP_TABLE[cid]
    g = build_graph(fixture(cid))
    assert sets(identify_functional_groups(g)) == sets(fgs)
    assert sets(identify_ring_groups(g)) == sets(rgs)
    gs = build_group_set(g)
    got_ccg = gs.ccg.atoms if gs.ccg else frozenset()
    assert got_ccg == frozenset(ccg)
    assert len(gs) == group_count(cid)


@pytest.mark.parametrize("cid", list(ATOM_COUNTS))
def test_fixture_formula(cid):
    m = fixture(cid)
    counts = {e: m.elements.count(e) for e in set(m.elements)}
    assert counts == ATOM_COUNTS[cid]


def test_fg_examples():
    assert sets(g.atoms for g in groups_of("712").of_kind(GroupKind.FG)) == [[0, 1]]
    assert [sorted(g.atoms) for g in groups_of("9999").groups] == [[0, 1, 2, 3]]
    assert [sorted(g.atoms) for g in groups_of("702").of_kind(GroupKind.FG)] == [[2]]
    assert sets(g.atoms for g in groups_of("1183").of_kind(GroupKind.FG)) == [[4, 8], [9], [10]]
    assert groups_of("11309472").of_kind(GroupKind.FG) == []
    fg652912 = sets(g.atoms for g in groups_of("652912").of_kind(GroupKind.FG))
    assert [1, 3] in fg652912 and [13, 15, 16] in fg652912


def test_ring_groups_have_no_hydrogen():
    for m in fixtures():
        gs = build_group_set(build_graph(m))
        for group in gs.groups:
            if group.kind is not GroupKind.CCG:
                assert all(m.elements[a] != "H" for a in group.atoms)


def test_coverage_and_ccg_disjointness():
    for m in fixtures():
        gs = build_group_set(build_graph(m))
        union = set().union(*(g.atoms for g in gs.groups))
        assert union == set(range(m.n_atoms))
        assert len(gs.of_kind(GroupKind.CCG)) <= 1
        if gs.ccg:
            others = set().union(*(g.atoms for g in gs.groups if g.kind is not GroupKind.CCG))
            assert not (gs.ccg.atoms & others)


def test_group_order_total():
    for m in fixtures():
        gs = build_group_set(build_graph(m))
        keys = [g.sort_key() for g in gs.groups]
        assert keys == sorted(keys)
        kinds = gs.kinds
        assert kinds == sorted(kinds, key=[GroupKind.FG, GroupKind.RG, GroupKind.CCG].index)


def test_methane_and_cyanogen_and_mesitylene():
    gs = groups_of("297")
    assert gs.kinds == [GroupKind.CCG] and gs.ccg.atoms == frozenset(range(5))
    assert groups_of("9999").ccg is None
    mes = groups_of("7947")
    assert mes.of_kind(GroupKind.RG)[0].atoms == frozenset({3, 4, 5, 6, 7, 8})
    assert {0, 1, 2} <= mes.ccg.atoms


def test_acetal_and_epoxide_rules():
    # 2,2-dimethoxypropane: the central carbon carries two O-CH3
    el = ["C", "C", "C", "O", "O", "C", "C"] + ["H"] * 12
    bonds = [(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S), (3, 5, S), (4, 6, S)]
    h = 7
    for c in (1, 2, 5, 6):
        for _ in range(3):
            bonds.append((c, h, S))
            h += 1
    fgs = identify_functional_groups(build_graph(molecule(el, bonds)))
    assert [0, 3, 4] in sets(fgs)
    # oxirane: every ring atom is marked
    el = ["C", "C", "O", "H", "H", "H", "H"]
    bonds = [(0, 1, S), (1, 2, S), (2, 0, S), (0, 3, S), (0, 4, S), (1, 5, S), (1, 6, S)]
    assert sets(identify_functional_groups(build_graph(molecule(el, bonds)))) == [[0, 1, 2]]


def test_alkene_carbons_marked():
    el = ["C", "C", "H", "H", "H", "H"]
    bonds = [(0, 1, D), (0, 2, S), (0, 3, S), (1, 4, S), (1, 5, S)]
    assert sets(identify_functional_groups(build_graph(molecule(el, bonds)))) == [[0, 1]]


def test_membership_formaldehyde():
    mem = build_membership(groups_of("712"))
    assert mem.M1.shape == (4, 2)
    assert np.array_equal(mem.M1[:, 0], [1, 1, 0, 0]) and np.array_equal(mem.M1[:, 1], [0, 0, 1, 1])
    assert mem.M2.ravel().tolist() == [1.0, 0.1]


def test_membership_benzene():
    assert build_membership(groups_of("11309472")).M2.ravel().tolist() == [0.5, 0.1]


def test_membership_657862_overlaps():
    gs = groups_of("657862")
    mem = build_membership(gs)
    rows = mem.M1.sum(axis=1)
    rg_cols = [i for i, k in enumerate(gs.kinds) if k is GroupKind.RG]
    rg_rows = mem.M1[:, rg_cols].sum(axis=1)
    for atom in (5, 6, 7, 9):
        assert rg_rows[atom] == 2
    assert np.all(rows >= 1)
    assert np.array_equal(mem.M1.sum(axis=0), [len(g.atoms) for g in gs.groups])


def test_per_group_weights():
    gs = groups_of("1183")
    w = tuple(float(i + 1) for i in range(len(gs)))
    mem = build_membership(gs, GroupWeightConfig(mode=WeightMode.PER_GROUP, per_group=w))
    assert mem.M2.ravel().tolist() == list(w)
    with pytest.raises(WeightCountMismatch):
        build_membership(gs, GroupWeightConfig(mode=WeightMode.PER_GROUP, per_group=(1.0,)))


def test_weights_must_be_positive():
    with pytest.raises(ValueError):
        GroupWeightConfig(w_fg=0.0)
    assert DEFAULT_WEIGHTS.triple == (1.0, 0.5, 0.1)
    assert DEFAULT_WEIGHTS.scaled(2).triple == (2.0, 1.0, 0.2)


def test_group_stats_on_fixtures():
    stats = group_stats(build_group_set(build_graph(m)) for m in fixtures())
    counts = [group_count(cid) for cid in GROUP_TABLE]
    assert stats.count == 17
    assert stats.mean == sum(counts) / len(counts) == 87 / 17
    assert (stats.min, stats.max) == (1, 13)
    assert sum(stats.histogram.values()) == 17


def test_group_stats_single_and_empty():
    stats = group_stats([groups_of("297")])
    assert stats.mean == stats.min == stats.max == 1
    with pytest.raises(EmptyDataset):
        group_stats([])


def test_group_report_sorted():
    rep = group_report(groups_of("1183"), "1183")
    assert rep == {"cid": "1183", "fgs": [[4, 8], [9], [10]], "rgs": [[1, 2, 3, 5, 6, 7]], "ccg": [0] + list(range(11, 19))}
