"""Distribution, reweighting, and likelihood tests for the cue machinery."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from fluency.corpus import CategoryScheme, FluencyRun, FrequencyTable, TransitionMatrix
from fluency.cues import (
    CueModel,
    CueWeights,
    NextDistribution,
    distribution_switch_mass,
    load_external,
    next_distribution,
    reweight_external,
    sequence_loglik,
    switch_mass,
    ExternalModel,
)
from fluency.errors import DataError, DeadEndError
from fluency.network import network_from_weights

from conftest import TWO_CLIQUE_SURFACES, random_network


class TestNextDistribution:
    def test_local_only_normalizes_edges(self, three_node_net):
        dist = next_distribution(three_node_net, CueWeights(1, 0, 0), current="a")
        assert dist.as_dict() == pytest.approx({"b": 0.25, "c": 0.75})

    def test_global_only_ignores_current(self, three_node_net):
        for current in ("a", "b", "c"):
            dist = next_distribution(three_node_net, CueWeights(0, 1, 0), current=current)
            assert dist.as_dict() == pytest.approx(
                {"a": 0.5, "b": 0.3, "c": 0.2}, abs=1e-12
            )

    def test_local_global_product_hand_oracle(self, three_node_net):
        # from a: score(b) = 0.2 * 0.3, score(c) = 0.6 * 0.2; a has no
        # self-edge so its score is 0
        dist = next_distribution(three_node_net, CueWeights(1, 1, 0), current="a")
        expected_b = Fraction(2, 10) * Fraction(3, 10)
        expected_c = Fraction(6, 10) * Fraction(2, 10)
        total = expected_b + expected_c
        assert dist.prob_of("b") == pytest.approx(float(expected_b / total), abs=1e-12)
        assert dist.prob_of("c") == pytest.approx(float(expected_c / total), abs=1e-12)
        assert dist.prob_of("a") == 0.0

    def test_start_distribution_is_global_only(self, three_node_net):
        dist = next_distribution(three_node_net, CueWeights(1, 1, 0), current=None)
        assert dist.as_dict() == pytest.approx({"a": 0.5, "b": 0.3, "c": 0.2})

    def test_zero_power_zero_is_one(self, three_node_net):
        # with beta_local = 0 even the current node (no self-edge) stays in
        dist = next_distribution(three_node_net, CueWeights(0, 1, 0), current="a")
        assert "a" in dist.exemplars

    def test_exclusion_renormalizes(self, three_node_net):
        dist = next_distribution(
            three_node_net, CueWeights(0, 1, 0), current=None, excluded=frozenset(["a"])
        )
        assert dist.as_dict() == pytest.approx({"b": 0.6, "c": 0.4})

    def test_exclusion_preserves_survivor_ratios(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            net = random_network(rng)
            surfaces = list(net.lexicon)
            current = surfaces[int(rng.integers(len(surfaces)))]
            full = next_distribution(net, CueWeights(1, 1, 0), current=current)
            if len(full) < 3:
                continue
            drop = full.exemplars[int(rng.integers(len(full)))]
            reduced = next_distribution(
                net, CueWeights(1, 1, 0), current=current, excluded=frozenset([drop])
            )
            keep = [e for e in full.exemplars if e != drop]
            a, b = keep[0], keep[-1]
            ratio_full = full.prob_of(a) / full.prob_of(b)
            ratio_reduced = reduced.prob_of(a) / reduced.prob_of(b)
            assert ratio_reduced == pytest.approx(ratio_full, rel=1e-12)

    def test_all_scores_zero_raises_dead_end(self):
        w = np.array([[0.0, 0.9], [0.0, 0.0]])
        net = network_from_weights(["a", "b"], w)
        with pytest.raises(DeadEndError):
            next_distribution(net, CueWeights(1, 0, 0), current="b")

    def test_global_required_when_weighted(self):
        net = network_from_weights(["a", "b"], np.array([[0, 0.5], [0.5, 0]]))
        with pytest.raises(DataError, match="global"):
            next_distribution(net, CueWeights(1, 1, 0), current="a")

    def test_distribution_sums_to_one_with_positive_entries(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            net = random_network(rng)
            surfaces = list(net.lexicon)
            current = surfaces[int(rng.integers(len(surfaces)))]
            dist = next_distribution(net, CueWeights(1, 1, 0), current=current)
            assert abs(float(dist.probs.sum()) - 1.0) < 1e-9
            assert (dist.probs > 0).all()


SUBCAT_SCHEME = CategoryScheme(
    categories=("one", "two"),
    membership={"a": (0,), "b": (0,), "c": (1,)},
)
SUBCAT_TRANS = TransitionMatrix(
    probs=np.array([[0.75, 0.25], [0.4, 0.6]]), categories=("one", "two")
)


class TestSubcategoryCue:
    def test_subcat_zero_bit_matches_two_cue_model(self, three_node_net):
        for current in (None, "a", "b"):
            two_cue = next_distribution(three_node_net, CueWeights(1, 1, 0), current=current)
            with_subcat = next_distribution(
                three_node_net,
                CueWeights(1, 1, 0),
                current=current,
                transitions=SUBCAT_TRANS,
                scheme=SUBCAT_SCHEME,
            )
            assert two_cue.exemplars == with_subcat.exemplars
            assert (two_cue.probs == with_subcat.probs).all()

    def test_three_cue_hand_oracle(self, three_node_net):
        # from a (category one): score(b) = 0.2 * 0.3 * 0.75,
        # score(c) = 0.6 * 0.2 * 0.25
        dist = next_distribution(
            three_node_net,
            CueWeights(1, 1, 1),
            current="a",
            transitions=SUBCAT_TRANS,
            scheme=SUBCAT_SCHEME,
        )
        sb = Fraction(2, 10) * Fraction(3, 10) * Fraction(3, 4)
        sc = Fraction(6, 10) * Fraction(2, 10) * Fraction(1, 4)
        assert dist.prob_of("b") == pytest.approx(float(sb / (sb + sc)), abs=1e-12)
        assert dist.prob_of("c") == pytest.approx(float(sc / (sb + sc)), abs=1e-12)

    def test_requires_transitions_and_scheme(self, three_node_net):
        with pytest.raises(DataError, match="subcat"):
            next_distribution(three_node_net, CueWeights(1, 1, 1), current="a")

    def test_multi_membership_takes_max_entry(self, three_node_net):
        scheme = CategoryScheme(
            categories=("one", "two"),
            membership={"a": (0,), "b": (0, 1), "c": (1,)},
        )
        dist = next_distribution(
            three_node_net,
            CueWeights(0, 0, 1),
            current="a",
            transitions=SUBCAT_TRANS,
            scheme=scheme,
        )
        # factors: b -> max(0.75, 0.25) = 0.75, c -> 0.25, a -> 0.75
        expected = {"a": 0.75, "b": 0.75, "c": 0.25}
        total = sum(expected.values())
        assert dist.as_dict() == pytest.approx(
            {k: v / total for k, v in expected.items()}, abs=1e-12
        )


class TestCueModelFallback:
    def test_dead_end_falls_back_to_global(self):
        w = np.array([[0.0, 0.9], [0.0, 0.0]])
        net = network_from_weights(["a", "b"], w, global_freq={"a": 0.8, "b": 0.2})
        model = CueModel(net, CueWeights(1, 0, 0))
        dist = model.distribution(("b",))
        # b has no out-edges; fallback is the global distribution minus nothing
        assert dist.as_dict() == pytest.approx({"a": 0.8, "b": 0.2})

    def test_dead_end_without_global_is_uniform(self):
        w = np.array([[0.0, 0.9], [0.0, 0.0]])
        net = network_from_weights(["a", "b"], w)
        model = CueModel(net, CueWeights(1, 0, 0))
        dist = model.distribution(("b",), excluded=frozenset(["b"]))
        assert dist.as_dict() == pytest.approx({"a": 1.0})

    def test_everything_excluded_raises(self, three_node_net):
        model = CueModel(three_node_net, CueWeights(1, 1, 0))
        with pytest.raises(DeadEndError):
            model.distribution(("a",), excluded=frozenset(["a", "b", "c"]))

    def test_unknown_current_raises_dead_end(self, three_node_net):
        model = CueModel(three_node_net, CueWeights(1, 1, 0))
        with pytest.raises(DeadEndError):
            model.distribution(("yeti",))


class TestReweightExternal:
    def test_identity_when_local_one_global_zero(self):
        dist = NextDistribution(["x", "y"], np.array([0.7, 0.3]))
        out = reweight_external(dist, FrequencyTable({"x": 0.5, "y": 0.5}), 1.0, 0.0)
        assert out.as_dict() == pytest.approx(dist.as_dict(), abs=1e-12)

    def test_global_only_restricts_and_renormalizes(self):
        dist = NextDistribution(["x", "y"], np.array([0.7, 0.3]))
        table = FrequencyTable({"x": 0.1, "y": 0.3, "z": 0.6})
        out = reweight_external(dist, table, 0.0, 1.0)
        assert out.as_dict() == pytest.approx({"x": 0.25, "y": 0.75}, abs=1e-12)

    def test_three_item_hand_product(self):
        dist = NextDistribution(["x", "y", "z"], np.array([0.5, 0.3, 0.2]))
        table = FrequencyTable({"x": 0.1, "y": 0.2, "z": 0.4, "w": 0.3})
        out = reweight_external(dist, table, 2.0, 0.5)
        scores = {
            "x": 0.5**2 * 0.1**0.5,
            "y": 0.3**2 * 0.2**0.5,
            "z": 0.2**2 * 0.4**0.5,
        }
        total = sum(scores.values())
        for k in scores:
            assert out.prob_of(k) == pytest.approx(scores[k] / total, abs=1e-12)

    def test_missing_exemplar_gets_floor(self):
        dist = NextDistribution(["x", "novel"], np.array([0.5, 0.5]))
        table = FrequencyTable({"x": 0.25, "y": 0.75})
        out = reweight_external(dist, table, 1.0, 1.0)
        floor = 0.25 * 1e-2
        assert out.prob_of("novel") == pytest.approx(
            0.5 * floor / (0.5 * 0.25 + 0.5 * floor), abs=1e-12
        )


class TestSequenceLoglik:
    def test_certain_transitions_score_zero(self):
        w = np.array([[0.0, 1.0], [0.0, 0.0]])
        net = network_from_weights(["a", "b"], w)
        model = CueModel(net, CueWeights(1, 0, 0))
        assert sequence_loglik(model, ["a", "b"]) == pytest.approx(0.0)

    def test_two_item_half_probability(self):
        w = np.array([[0.0, 0.5, 0.5], [0, 0, 0], [0, 0, 0]])
        net = network_from_weights(["a", "b", "c"], w)
        model = CueModel(net, CueWeights(1, 0, 0))
        assert sequence_loglik(model, ["a", "b"]) == pytest.approx(math.log(0.5))

    def test_four_item_hand_oracle(self, three_node_net):
        # transitions under (1, 1, 0) without repeat exclusion:
        # a -> c: 0.12 / 0.18, c -> b: 0.09 / 0.39, b -> a: 0.10 / 0.16
        model = CueModel(three_node_net, CueWeights(1, 1, 0))
        expected = (
            math.log(Fraction(12, 18))
            + math.log(Fraction(9, 39))
            + math.log(Fraction(10, 16))
        )
        got = sequence_loglik(model, ["a", "c", "b", "a"], exclude_repeats=False)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_floor_applies_to_excluded_repeat(self, three_node_net):
        model = CueModel(three_node_net, CueWeights(0, 1, 0))
        floor = math.log(1e-10)
        got = sequence_loglik(model, ["a", "a"], floor_logp=floor)
        assert got == pytest.approx(floor)

    def test_short_run_rejected(self, three_node_net):
        model = CueModel(three_node_net, CueWeights(1, 1, 0))
        with pytest.raises(DataError):
            sequence_loglik(model, ["a"])


class FixedModel:
    """Provider that returns one fixed distribution at every prefix."""

    def __init__(self, dist):
        self.dist = dist

    def distribution(self, prefix, excluded=frozenset()):
        return self.dist.restrict(excluded)


class TestSwitchMass:
    def test_all_shared_category_is_zero(self):
        scheme = CategoryScheme(categories=("one",), membership={"a": (0,), "b": (0,)})
        model = FixedModel(NextDistribution(["b"], np.array([1.0])))
        assert switch_mass(model, "a", scheme) == 0.0

    def test_all_disjoint_is_one(self):
        scheme = CategoryScheme(
            categories=("one", "two"), membership={"a": (0,), "b": (1,)}
        )
        model = FixedModel(NextDistribution(["b"], np.array([1.0])))
        assert switch_mass(model, "a", scheme) == 1.0

    def test_two_clique_within_block_below_half(
        self, two_clique_net, two_clique_scheme
    ):
        model = CueModel(two_clique_net, CueWeights(1, 0, 0))
        got = switch_mass(model, "a0", two_clique_scheme, excluded=frozenset(["a0"]))
        # brute force: out of a0, in-block 4 * 0.9, cross-block 5 * 0.1
        dist = model.distribution(("a0",), frozenset(["a0"]))
        brute = sum(
            p
            for e, p in zip(dist.exemplars, dist.probs)
            if two_clique_scheme.member_set("a0").isdisjoint(
                two_clique_scheme.member_set(e)
            )
        )
        assert got == pytest.approx(brute, abs=1e-12)
        assert got == pytest.approx(float(Fraction(5, 41)), abs=1e-12)
        assert got < 0.5

    def test_unmapped_current_counts_everything(self, two_clique_net):
        scheme = CategoryScheme(categories=("one",), membership={"a0": (0,)})
        model = CueModel(two_clique_net, CueWeights(1, 0, 0))
        assert switch_mass(model, "b0", scheme) == pytest.approx(1.0)


class TestExternalDistributions:
    def write_records(self, path, records):
        with open(path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        return str(path)

    def test_load_and_renormalize_logs_shortfall(self, tmp_path, caplog):
        path = self.write_records(
            tmp_path / "d.jsonl",
            [
                {
                    "prefix_id": "p1:0",
                    "prefix": [],
                    "candidates": [
                        {"exemplar": "dog", "prob": 0.4},
                        {"exemplar": "cat", "prob": 0.4},
                    ],
                }
            ],
        )
        with caplog.at_level("INFO"):
            dists = load_external(path)
        rec = dists.by_id["p1:0"]
        assert rec.dist.as_dict() == pytest.approx({"dog": 0.5, "cat": 0.5})
        assert any("truncated mass" in r.message for r in caplog.records)

    def test_duplicate_prefix_id_rejected(self, tmp_path):
        records = [
            {"prefix_id": "x", "prefix": [], "candidates": [{"exemplar": "a", "prob": 1.0}]},
            {"prefix_id": "x", "prefix": ["a"], "candidates": [{"exemplar": "b", "prob": 1.0}]},
        ]
        path = self.write_records(tmp_path / "d.jsonl", records)
        with pytest.raises(DataError, match="duplicate"):
            load_external(path)

    def test_probability_range_enforced(self, tmp_path):
        path = self.write_records(
            tmp_path / "d.jsonl",
            [{"prefix_id": "x", "prefix": [], "candidates": [{"exemplar": "a", "prob": 1.5}]}],
        )
        with pytest.raises(DataError, match="probability"):
            load_external(path)

    def test_exact_prefix_lookup(self, tmp_path):
        records = [
            {"prefix_id": "s", "prefix": [], "candidates": [{"exemplar": "dog", "prob": 1.0}]},
            {
                "prefix_id": "s2",
                "prefix": ["dog"],
                "candidates": [
                    {"exemplar": "cat", "prob": 0.75},
                    {"exemplar": "emu", "prob": 0.25},
                ],
            },
        ]
        path = self.write_records(tmp_path / "d.jsonl", records)
        model = ExternalModel(load_external(path))
        assert model.distribution(()).as_dict() == {"dog": 1.0}
        assert model.distribution(("dog",)).as_dict() == pytest.approx(
            {"cat": 0.75, "emu": 0.25}
        )

    def test_suffix_fallback_pools_matches(self, tmp_path):
        records = [
            {"prefix_id": "a", "prefix": ["x", "dog"],
             "candidates": [{"exemplar": "cat", "prob": 1.0}]},
            {"prefix_id": "b", "prefix": ["y", "dog"],
             "candidates": [{"exemplar": "emu", "prob": 1.0}]},
        ]
        path = self.write_records(tmp_path / "d.jsonl", records)
        model = ExternalModel(load_external(path))
        # unseen full prefix ending in dog pools both dog-suffixed records
        dist = model.distribution(("z", "dog"))
        assert dist.as_dict() == pytest.approx({"cat": 0.5, "emu": 0.5})

    def test_exclusion_applies_after_reweight(self, tmp_path):
        records = [
            {"prefix_id": "s", "prefix": [],
             "candidates": [{"exemplar": "dog", "prob": 0.5},
                            {"exemplar": "cat", "prob": 0.5}]},
        ]
        path = self.write_records(tmp_path / "d.jsonl", records)
        model = ExternalModel(
            load_external(path),
            global_freq=FrequencyTable({"dog": 0.9, "cat": 0.1}),
            beta_local=1.0,
            beta_global=1.0,
        )
        assert model.distribution((), frozenset(["dog"])).as_dict() == {"cat": 1.0}


class TestEntropy:
    def test_uniform_entropy(self):
        dist = NextDistribution(["a", "b", "c", "d"], np.full(4, 0.25))
        assert dist.entropy() == pytest.approx(math.log(4))

    def test_one_hot_entropy_zero(self):
        dist = NextDistribution(["a"], np.array([1.0]))
        assert dist.entropy() == 0.0
