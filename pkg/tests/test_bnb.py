import math

import numpy as np
import pytest

from learnbnb.bnb import (
    Decision,
    Incumbent,
    SearchNode,
    select_fractional_variable,
    select_node,
    solve_exact,
    standard_prune_decision,
    trace_to_jsonl,
)
from learnbnb.conic import RelaxedSolution, SolveStatus
from learnbnb.cran import CranInstance, exhaustive_oracle, generate_feasible_instance
from learnbnb.problems import VarBounds
from learnbnb.toy import ScriptedToyProblem


def mk_node(node_id=7, depth=2, lb=(0, 0), ub=(1, 1)):
    return SearchNode(id=node_id, parent_id=1, depth=depth, bounds=VarBounds(lb=lb, ub=ub))


class TestPruneDecision:
    def test_prune_by_bound(self):
        sol = RelaxedSolution(SolveStatus.OPTIMAL, np.array([2.125, 0.0]), -11.6875)
        inc = Incumbent(objective=-11.8, assignment=(1, 3))
        assert standard_prune_decision(mk_node(), sol, inc) is Decision.PRUNE_BOUND

    def test_infeasible_is_infinite_bound(self):
        sol = RelaxedSolution(SolveStatus.INFEASIBLE, None, math.inf)
        assert (
            standard_prune_decision(mk_node(), sol, Incumbent())
            is Decision.PRUNE_INFEASIBILITY
        )

    def test_integral_solution_prunes(self):
        sol = RelaxedSolution(SolveStatus.OPTIMAL, np.array([1.0, 3.0]), -11.8)
        assert (
            standard_prune_decision(mk_node(), sol, Incumbent())
            is Decision.PRUNE_INTEGRALITY
        )

    def test_fractional_below_incumbent_is_preserved(self):
        sol = RelaxedSolution(SolveStatus.OPTIMAL, np.array([2.0, 0.5]), -12.05)
        inc = Incumbent(objective=-11.8, assignment=(1, 3))
        assert standard_prune_decision(mk_node(), sol, inc) is Decision.PRESERVE


class TestSelection:
    def test_single_node(self):
        only = mk_node()
        assert select_node([only], "depth-first") is only

    def test_depth_first_pops_last_pushed(self):
        left, right = mk_node(2), mk_node(3)
        stack = [left, right]
        assert select_node(stack, "depth-first") is right

    def test_best_first_argmin_with_insertion_tiebreak(self):
        a = SearchNode(id=2, parent_id=1, depth=2, bounds=VarBounds.binary(1), parent_objective=5.0)
        b = SearchNode(id=3, parent_id=1, depth=2, bounds=VarBounds.binary(1), parent_objective=3.0)
        c = SearchNode(id=4, parent_id=1, depth=2, bounds=VarBounds.binary(1), parent_objective=3.0)
        pool = [a, b, c]
        assert select_node(pool, "best-first") is b

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            select_node([], "depth-first")

    def test_most_fractional(self):
        assert select_fractional_variable(np.array([0.5, 0.9]), "most-fractional") == 0

    def test_tie_breaks_to_lowest_index(self):
        assert select_fractional_variable(np.array([0.9, 0.9]), "most-fractional") == 0

    def test_lowest_index_on_toy_root(self):
        assert select_fractional_variable(np.array([1.3, 3.3]), "lowest-index") == 0

    def test_no_fractional_is_an_error(self):
        with pytest.raises(ValueError):
            select_fractional_variable(np.array([1.0, 0.0]))


class TestToyReplay:
    def test_full_tree_and_prune_events(self):
        result = solve_exact(ScriptedToyProblem(), child_order="left-first")
        assert result.incumbent.assignment == (1, 3)
        assert result.incumbent.objective == pytest.approx(-11.8)
        counts = {d: result.stats.prune_count(d) for d in Decision if d is not Decision.PRESERVE}
        assert counts[Decision.PRUNE_BOUND] == 1
        assert counts[Decision.PRUNE_INFEASIBILITY] == 1
        assert counts[Decision.PRUNE_INTEGRALITY] == 1
        bound_prunes = [
            rec for rec in result.trace if rec.decision is Decision.PRUNE_BOUND
        ]
        assert bound_prunes[0].objective == pytest.approx(-11.6875)

    def test_trace_completeness(self):
        result = solve_exact(ScriptedToyProblem(), child_order="left-first")
        ids = [rec.node.id for rec in result.trace]
        assert len(ids) == len(set(ids)) == result.stats.nodes_explored
        pruned_ids = {node_id for node_id, _ in result.stats.prune_events}
        assert pruned_ids <= set(ids)

    def test_trace_serializes_to_jsonl(self):
        result = solve_exact(ScriptedToyProblem(), child_order="left-first")
        text = trace_to_jsonl(result.trace)
        lines = text.strip().split("\n")
        assert len(lines) == len(result.trace)
        assert '"decision"' in lines[0]


class TestEngineOptimality:
    def test_matches_exhaustive_oracle(self, small_cfg):
        for seed in range(4):
            inst = generate_feasible_instance(small_cfg, seed=200 + seed)
            result = solve_exact(inst)
            oracle = exhaustive_oracle(inst)
            assert result.incumbent.objective == pytest.approx(
                oracle.objective, rel=1e-5
            )

    def test_anytime_root_bound(self, small_instance):
        result = solve_exact(small_instance)
        assert result.root_solution.objective <= result.incumbent.objective + 1e-9

    def test_best_first_agrees_with_depth_first(self, small_instance):
        depth = solve_exact(small_instance, node_policy="depth-first")
        best = solve_exact(small_instance, node_policy="best-first")
        assert depth.incumbent.objective == pytest.approx(best.incumbent.objective, rel=1e-7)

    def test_zero_fronthaul_keeps_everything_on(self, small_cfg):
        base = generate_feasible_instance(small_cfg, seed=77)
        inst = CranInstance(
            config=base.config,
            rrh_positions=base.rrh_positions,
            user_positions=base.user_positions,
            channel=base.channel,
            pc=np.zeros(base.L),
        )
        result = solve_exact(inst)
        all_on = inst.leaf_evaluate((1,) * inst.L)
        # switching off can never help once fronthaul power is free
        assert result.incumbent.objective == pytest.approx(all_on.objective, rel=1e-5)

    def test_infeasible_root_is_reported(self, small_cfg):
        import dataclasses

        cfg = dataclasses.replace(small_cfg, target_sinr_db=80.0)
        inst = generate_feasible_instance(small_cfg, seed=11)
        hard = CranInstance(
            config=cfg,
            rrh_positions=inst.rrh_positions,
            user_positions=inst.user_positions,
            channel=inst.channel * 1e-6,
            pc=inst.pc,
        )
        result = solve_exact(hard)
        assert result.problem_infeasible
        assert not result.incumbent.found
