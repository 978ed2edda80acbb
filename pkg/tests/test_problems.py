import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from learnbnb.conic import SolveStatus, solve_conic
from learnbnb.problems import NodeProblem, VarBounds, branch_partition, is_complete, split_bounds
from learnbnb.toy import ScriptedToyProblem, scripted_relaxation


def node(lb, ub):
    return NodeProblem(bounds=VarBounds(lb=tuple(lb), ub=tuple(ub)), instance_id="t")


class TestBranchPartition:
    def test_binary_split_is_forced(self):
        left, right = branch_partition(node([0, 0], [1, 1]), j=0, pivot=0.37)
        assert left.bounds.lb[0] == left.bounds.ub[0] == 0
        assert right.bounds.lb[0] == right.bounds.ub[0] == 1
        # other variable untouched
        assert left.bounds.lb[1] == 0 and left.bounds.ub[1] == 1

    def test_general_bounds_floor_ceil(self):
        left, right = branch_partition(node([0], [5]), j=0, pivot=3.3)
        assert left.bounds.ub[0] == 3
        assert right.bounds.lb[0] == 4

    def test_root_split_at_1_3(self):
        left, right = branch_partition(node([0, 0], [5, 5]), j=0, pivot=1.3)
        assert left.bounds.ub[0] == 1
        assert right.bounds.lb[0] == 2

    def test_rejects_fixed_variable(self):
        with pytest.raises(ValueError, match="already fixed"):
            branch_partition(node([1, 0], [1, 1]), j=0, pivot=0.5)

    def test_rejects_pivot_outside_bounds(self):
        with pytest.raises(ValueError, match="outside"):
            branch_partition(node([0], [5]), j=0, pivot=6.5)

    def test_rejects_integral_pivot(self):
        with pytest.raises(ValueError, match="fractional"):
            branch_partition(node([0], [5]), j=0, pivot=3.0)

    def test_complete_node_cannot_branch(self):
        with pytest.raises(ValueError):
            branch_partition(node([1, 1], [1, 1]), j=0, pivot=0.5)

    @given(
        n=st.integers(min_value=1, max_value=6),
        j=st.integers(min_value=0, max_value=5),
        frac=st.floats(min_value=0.05, max_value=0.95),
    )
    @settings(max_examples=60)
    def test_binary_lattice_partition_is_exact(self, n, j, frac):
        j = j % n
        parent = VarBounds.binary(n)
        left, right = split_bounds(parent, j, j_pivot := frac)
        assert 0 < j_pivot < 1
        for point in itertools.product((0, 1), repeat=n):
            in_left = left.contains(point)
            in_right = right.contains(point)
            assert in_left != in_right  # exactly one child

    @given(
        lo=st.integers(min_value=0, max_value=3),
        hi=st.integers(min_value=4, max_value=8),
        tenths=st.integers(min_value=1, max_value=9),
        offset=st.integers(min_value=0, max_value=7),
    )
    @settings(max_examples=60)
    def test_general_lattice_partition_is_exact(self, lo, hi, tenths, offset):
        pivot = lo + (offset % (hi - lo)) + tenths / 10.0
        parent = VarBounds(lb=(lo,), ub=(hi,))
        left, right = split_bounds(parent, 0, pivot)
        for v in range(lo, hi + 1):
            assert left.contains((v,)) != right.contains((v,))


class TestCompleteness:
    def test_all_fixed(self):
        assert is_complete(node([1, 0, 1], [1, 0, 1]))

    def test_one_free(self):
        assert not is_complete(node([1, 0], [1, 1]))

    def test_root_of_six(self):
        assert not is_complete(NodeProblem(bounds=VarBounds.binary(6), instance_id="t"))

    def test_assignment_requires_complete(self):
        with pytest.raises(ValueError):
            VarBounds.binary(2).assignment()

    def test_invalid_interval_rejected(self):
        with pytest.raises(ValueError):
            VarBounds(lb=(2,), ub=(1,))


class TestScriptedToy:
    SCRIPT_KEYS = [
        ((0, 0), (5, 5)),
        ((0, 0), (1, 5)),
        ((2, 0), (5, 5)),
        ((2, 0), (5, 0)),
        ((2, 1), (5, 5)),
    ]

    def test_root_values(self):
        sol = scripted_relaxation(VarBounds(lb=(0, 0), ub=(5, 5)))
        assert sol.x == pytest.approx([1.3, 3.3])
        assert sol.objective == -14.08

    def test_left_branch_is_integral(self):
        sol = scripted_relaxation(VarBounds(lb=(0, 0), ub=(1, 5)))
        assert sol.x == pytest.approx([1.0, 3.0])
        assert sol.objective == -11.8

    def test_rightmost_branch_infeasible(self):
        sol = scripted_relaxation(VarBounds(lb=(2, 1), ub=(5, 5)))
        assert sol.status is SolveStatus.INFEASIBLE

    def test_unknown_bounds_rejected(self):
        with pytest.raises(KeyError):
            scripted_relaxation(VarBounds(lb=(0, 0), ub=(2, 5)))

    def test_replay_is_deterministic_and_total(self):
        for lb, ub in self.SCRIPT_KEYS:
            first = scripted_relaxation(VarBounds(lb=lb, ub=ub))
            second = scripted_relaxation(VarBounds(lb=lb, ub=ub))
            assert first.status is second.status
            assert first.objective == second.objective

    def test_script_matches_true_lp(self):
        """The replay table is exactly the LP the bounds describe."""
        toy = ScriptedToyProblem()
        for lb, ub in self.SCRIPT_KEYS:
            bounds = VarBounds(lb=lb, ub=ub)
            scripted = scripted_relaxation(bounds)
            solved = solve_conic(toy.relax(bounds))
            assert scripted.status is solved.status
            if scripted.status is SolveStatus.OPTIMAL:
                assert solved.objective == pytest.approx(scripted.objective, abs=1e-6)
                assert np.allclose(solved.x, scripted.x, atol=1e-6)

    def test_leaf_evaluate_agrees_with_relaxation_on_complete_bounds(self):
        toy = ScriptedToyProblem()
        leaf = toy.leaf_evaluate((1, 3))
        assert leaf.feasible
        assert leaf.objective == pytest.approx(-11.8)
        assert not toy.leaf_evaluate((3, 0)).feasible  # 8*3 > 17
