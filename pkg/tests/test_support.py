import itertools

import numpy as np
import pytest

from seqrank.errors import CapacityError, ValidationError
from seqrank.model import ModelParams, Pair
from seqrank.support import (
    RankPermutation,
    RankRegion,
    SupportSpec,
    contains,
    enumerate_regions,
    half_space_regions,
    project_to_region,
    rank_of,
    sample_uniform,
)

SPEC3 = SupportSpec(n_items=3, kappa=2.0, delta=0.4)
SPEC2 = SupportSpec(n_items=2, kappa=2.0, delta=0.4)


def params(*free):
    return ModelParams.from_free(np.array(free, dtype=float))


def qp_projection_oracle(region: RankRegion, point: np.ndarray) -> np.ndarray:
    """Exact projection by enumerating candidate active sets of the polytope."""
    a_mat, b_vec = region.halfspaces()
    n = point.shape[0]
    best, best_dist = None, np.inf
    m = a_mat.shape[0]
    for size in range(0, n + 1):
        for subset in itertools.combinations(range(m), size):
            if size == 0:
                cand = point.copy()
            else:
                a_s = a_mat[list(subset)]
                b_s = b_vec[list(subset)]
                gram = a_s @ a_s.T
                nu, *_ = np.linalg.lstsq(gram, a_s @ point - b_s, rcond=None)
                cand = point - a_s.T @ nu
            if np.all(a_mat @ cand <= b_vec + 1e-9):
                dist = float(np.linalg.norm(cand - point))
                if dist < best_dist:
                    best, best_dist = cand, dist
    assert best is not None, "polytope unexpectedly empty"
    return best


class TestSupportSpec:
    def test_valid(self):
        SupportSpec(n_items=4, kappa=4.0, delta=0.2)

    def test_kappa_positive(self):
        with pytest.raises(ValidationError):
            SupportSpec(n_items=3, kappa=0.0, delta=0.1)

    def test_separation_leaves_region_interiors(self):
        # stacking K-1 gaps of delta must fit strictly inside the box
        with pytest.raises(ValidationError):
            SupportSpec(n_items=3, kappa=2.0, delta=1.0)

    def test_misspecified_ignores_delta(self):
        spec = SupportSpec(n_items=3, kappa=5.0, delta=0.4, misspecified=True)
        assert spec.effective_delta == 0.0
        assert contains(spec, params(0.1, 0.05))


class TestRankOf:
    def test_three_items(self):
        assert rank_of(params(1.0, -1.0)).one_based() == (2, 1, 3)

    def test_two_items(self):
        assert rank_of(params(-0.5)).one_based() == (1, 2)

    def test_tie_breaks_by_index(self):
        assert rank_of(params(0.0, 0.0)).one_based() == (1, 2, 3)

    def test_pairwise_decoding(self):
        perm = rank_of(params(1.0, -1.0))
        assert perm.places_above(1, 0)
        assert perm.places_above(0, 2)
        assert not perm.places_above(2, 1)


class TestContains:
    def test_inside(self):
        assert contains(SPEC3, params(1.0, -1.0))

    def test_separation_violated_vs_item1(self):
        assert not contains(SPEC3, params(0.3, -1.0))

    def test_box_violated(self):
        assert not contains(SPEC3, params(2.5, -1.0))


class TestEnumerateRegions:
    @pytest.mark.parametrize("k,count", [(2, 2), (3, 6), (4, 24)])
    def test_counts(self, k, count):
        spec = SupportSpec(n_items=k, kappa=4.0, delta=0.2)
        assert len(enumerate_regions(spec)) == count

    def test_capacity_error(self):
        with pytest.raises(CapacityError):
            enumerate_regions(SupportSpec(n_items=9, kappa=2.0, delta=0.0))

    def test_two_item_regions(self):
        regions = enumerate_regions(SPEC2)
        # region (1,2): theta2 <= -delta; region (2,1): theta2 >= delta
        lead = {r.perm.one_based(): r for r in regions}
        assert lead[(1, 2)].contains_point(np.array([-0.4]))
        assert not lead[(1, 2)].contains_point(np.array([0.0]))
        assert lead[(2, 1)].contains_point(np.array([0.4]))

    def test_partition_of_support(self):
        regions = enumerate_regions(SPEC3)
        rng = np.random.default_rng(17)
        pts = rng.uniform(-2, 2, size=(10_000, 2))
        for x in pts:
            inside = [r for r in regions if r.contains_point(x, tol=1e-12)]
            in_support = contains(SPEC3, ModelParams.from_free(x))
            assert (len(inside) >= 1) == in_support
            if in_support:
                # separation > 0 makes region interiors disjoint
                assert len(inside) == 1


class TestHalfSpaceRegions:
    def test_three_item_split(self):
        regs = half_space_regions(SPEC3, Pair(0, 1), winner=0)
        assert len(regs) == 3
        assert all(r.perm.places_above(0, 1) for r in regs)

    def test_two_item_single_region(self):
        regs = half_space_regions(SPEC2, Pair(0, 1), winner=1)
        assert len(regs) == 1
        assert regs[0].perm.one_based() == (2, 1)

    def test_directions_partition_all_regions(self):
        for pair in (Pair(0, 1), Pair(0, 2), Pair(1, 2)):
            first = half_space_regions(SPEC3, pair, winner=pair.i)
            second = half_space_regions(SPEC3, pair, winner=pair.j)
            perms = {r.perm.order for r in first} | {r.perm.order for r in second}
            assert len(first) + len(second) == 6
            assert len(perms) == 6

    def test_winner_must_belong_to_pair(self):
        with pytest.raises(ValueError):
            half_space_regions(SPEC3, Pair(0, 1), winner=2)


class TestSampleUniform:
    def test_box_only_accepts_everything(self):
        spec = SupportSpec(n_items=3, kappa=5.0, delta=0.0)
        rng = np.random.default_rng(0)
        draws = [sample_uniform(spec, rng) for _ in range(100)]
        assert all(contains(spec, d) for d in draws)

    def test_acceptance_rate_matches_volume_quadrature(self):
        # Lebesgue volume ratio of W inside the box, 4001^2 grid quadrature
        volume_ratio = 0.499698119709013
        rng = np.random.default_rng(101)
        n_total, n_accept = 0, 0
        target = 100_000
        while n_accept < target:
            free = rng.uniform(-2.0, 2.0, size=2)
            n_total += 1
            if contains(SPEC3, ModelParams.from_free(free)):
                n_accept += 1
        assert abs(n_accept / n_total - volume_ratio) < 0.02

    def test_rank_frequencies_match_region_volumes(self):
        # The pin theta1 = 0 breaks full item exchangeability: permutations
        # placing item 1 mid-ranking own larger regions.  Volume fractions
        # below come from 4001^2 grid quadrature of each region.
        volume_fraction = {
            (1, 2, 3): 0.09, (1, 3, 2): 0.09,
            (2, 1, 3): 0.32, (3, 1, 2): 0.32,
            (2, 3, 1): 0.09, (3, 2, 1): 0.09,
        }
        rng = np.random.default_rng(23)
        counts = dict.fromkeys(volume_fraction, 0)
        n = 60_000
        for _ in range(n):
            counts[rank_of(sample_uniform(SPEC3, rng)).one_based()] += 1
        for perm, frac in volume_fraction.items():
            assert abs(counts[perm] / n - frac) < 0.01
        # items 2 and 3 are exchangeable, so their swapped permutations match
        assert abs(counts[(1, 2, 3)] - counts[(1, 3, 2)]) / n < 0.01
        assert abs(counts[(2, 1, 3)] - counts[(3, 1, 2)]) / n < 0.01

    def test_every_draw_in_support(self):
        rng = np.random.default_rng(29)
        for _ in range(500):
            assert contains(SPEC3, sample_uniform(SPEC3, rng))

    def test_seed_determinism(self):
        a = [sample_uniform(SPEC3, np.random.default_rng(77)).free for _ in range(5)]
        b = [sample_uniform(SPEC3, np.random.default_rng(77)).free for _ in range(5)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestProjectToRegion:
    def test_interior_point_unchanged(self):
        region = enumerate_regions(SPEC3)[0]
        x = region.center()
        assert np.allclose(project_to_region(region, x), x, atol=1e-12)

    def test_one_dimensional_clamp(self):
        region = [r for r in enumerate_regions(SPEC2) if r.perm.one_based() == (2, 1)][0]
        assert project_to_region(region, np.array([0.1]))[0] == pytest.approx(0.4, abs=1e-10)
        assert project_to_region(region, np.array([3.0]))[0] == pytest.approx(2.0, abs=1e-10)

    def test_matches_qp_oracle(self):
        rng = np.random.default_rng(41)
        regions = enumerate_regions(SPEC3)
        for trial in range(100):
            region = regions[trial % len(regions)]
            point = rng.uniform(-4, 4, size=2)
            got = project_to_region(region, point)
            want = qp_projection_oracle(region, point)
            assert np.allclose(got, want, atol=1e-6), (region.perm, point, got, want)
            assert region.contains_point(got, tol=1e-9)

    def test_idempotent(self):
        rng = np.random.default_rng(43)
        regions = enumerate_regions(SPEC3)
        for trial in range(50):
            region = regions[trial % len(regions)]
            once = project_to_region(region, rng.uniform(-4, 4, size=2))
            twice = project_to_region(region, once)
            assert np.allclose(once, twice, atol=1e-9)

    def test_nonexpansive(self):
        rng = np.random.default_rng(47)
        regions = enumerate_regions(SPEC3)
        for trial in range(100):
            region = regions[trial % len(regions)]
            x = rng.uniform(-4, 4, size=2)
            y = rng.uniform(-4, 4, size=2)
            px = project_to_region(region, x)
            py = project_to_region(region, y)
            assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-9

    def test_k4_matches_qp_oracle(self):
        spec = SupportSpec(n_items=4, kappa=4.0, delta=0.2)
        regions = enumerate_regions(spec)
        rng = np.random.default_rng(53)
        for trial in range(60):
            region = regions[trial % len(regions)]
            point = rng.uniform(-6, 6, size=3)
            got = project_to_region(region, point)
            want = qp_projection_oracle(region, point)
            assert np.allclose(got, want, atol=1e-6)


class TestRankPermutation:
    def test_rejects_non_permutation(self):
        with pytest.raises(ValueError):
            RankPermutation((0, 0, 2))
