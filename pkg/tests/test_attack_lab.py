import math
import random
from fractions import Fraction

import pytest

from pake_authkit.attack_lab import (AttackParams, attack_effort,
                                     count_partial_preimages, oracle_enumerate,
                                     oracle_enumerate_masked, q_no_preimage,
                                     simulate_lazy_attack)
from pake_authkit.errors import UsageError


def pascal_row_sums(l: int, t: int) -> int:
    """Second, independent algorithm: binomials via Pascal's triangle."""
    row = [1]
    for _ in range(l):
        row = [1] + [row[i] + row[i + 1] for i in range(len(row) - 1)] + [1]
    return sum(row[1 : t + 1])


class TestParams:
    def test_partition_consistency(self):
        with pytest.raises(UsageError):
            AttackParams(10, 3, 5, 2)      # b != 2r + l
        with pytest.raises(UsageError):
            AttackParams(10, 3, 4, 5)      # u > l
        with pytest.raises(UsageError):
            AttackParams.from_checked(10, 6, 0)

    def test_from_checked(self):
        p = AttackParams.from_checked(80, 16, 32)
        assert (p.b, p.r, p.l, p.u, p.t) == (80, 16, 48, 32, 16)


class TestCount:
    def test_empty_when_everything_checked(self):
        assert count_partial_preimages(AttackParams(10, 3, 4, 4)) == 0

    def test_small_hand_sum(self):
        # l=4, t=2: C(4,1) + C(4,2) = 10
        assert count_partial_preimages(AttackParams(10, 3, 4, 2)) == 10

    def test_case_study_cross_checked_two_algorithms(self):
        params = AttackParams(80, 16, 48, 32)
        value = count_partial_preimages(params)
        assert value == pascal_row_sums(48, 16)
        assert value == 4124304597833

    def test_monotonic_in_t(self):
        prev = -1
        for u in range(48, -1, -1):
            cur = count_partial_preimages(AttackParams(80, 16, 48, u))
            assert cur > prev
            prev = cur


class TestQ:
    def test_one_when_all_checked(self):
        assert q_no_preimage(AttackParams(10, 3, 4, 4)) == 1

    def test_small_exact(self):
        assert q_no_preimage(AttackParams(10, 3, 4, 2)) == Fraction(1024 - 10, 1024)

    def test_case_study_closed_form(self):
        params = AttackParams(80, 16, 48, 32)
        s = sum(math.comb(48, k) for k in range(1, 17))
        assert q_no_preimage(params) == Fraction(2**80 - s, 2**80)

    def test_monotone_in_diligence(self):
        prev = Fraction(-1)
        for u in range(0, 49, 8):
            cur = q_no_preimage(AttackParams(80, 16, 48, u))
            assert cur > prev
            prev = cur


class TestEffort:
    def test_case_study_two_words_checked(self):
        est = attack_effort(AttackParams.from_checked(80, 16, 32), 0.5)
        assert 37 <= est.log2_e <= 39

    def test_case_study_one_word_checked(self):
        est = attack_effort(AttackParams.from_checked(80, 16, 16), 0.5)
        assert 31 <= est.log2_e <= 33

    def test_infeasible_result_not_exception(self):
        est = attack_effort(AttackParams(80, 16, 48, 48))
        assert not est.feasible
        assert est.e == math.inf
        assert est.miss_exponent is None

    def test_consistency_p_recovered(self):
        # p = 1 - q^e must reproduce the target to 6 significant digits
        import mpmath
        for p_target in (0.25, 0.5, 0.9):
            est = attack_effort(AttackParams.from_checked(80, 16, 32), p_target)
            with mpmath.workdps(80):
                eps = mpmath.mpf(est.valid_count) / mpmath.power(2, 80)
                p_back = 1 - mpmath.exp(mpmath.log1p(-eps) * mpmath.mpf(est.e))
                assert abs(float(p_back) - p_target) < p_target * 1e-6

    def test_p_target_validated(self):
        with pytest.raises(UsageError):
            attack_effort(AttackParams.from_checked(80, 16, 32), 1.0)


class TestOracle:
    def test_examples(self):
        assert oracle_enumerate(AttackParams(10, 3, 4, 2), target=0b1011001101) == 10
        assert oracle_enumerate(AttackParams(10, 3, 4, 4), target=17) == 0
        # b=16, l=8, u=3: 8 + 28 + 56 + 70 + 56 = 218
        assert oracle_enumerate(AttackParams(16, 4, 8, 3), target=0xBEEF) == 218

    def test_size_guard(self):
        with pytest.raises(UsageError):
            oracle_enumerate(AttackParams(30, 0, 30, 1), 0)

    def test_target_independence(self):
        params = AttackParams(12, 2, 8, 3)
        counts = {oracle_enumerate(params, t) for t in (0, 1, 0xFFF, 0xA5A)}
        assert len(counts) == 1

    def test_agrees_with_closed_form_spot(self):
        rng = random.Random(10)
        for _ in range(10):
            b = rng.randrange(4, 15)
            r = rng.randrange(0, b // 2 + 1)
            l = b - 2 * r
            u = rng.randrange(0, l + 1)
            params = AttackParams(b, r, l, u)
            assert oracle_enumerate(params, rng.getrandbits(b)) == \
                count_partial_preimages(params)


class TestMaskedOracle:
    def test_independent_of_position_choice(self):
        # a verifier checking any specific u positions misses exactly 2^t - 1
        # candidates, whichever positions they are
        params = AttackParams(12, 2, 8, 3)
        target = 0b101101110010
        masks = [(0, 1, 2), (5, 6, 7), (0, 3, 6), (2, 4, 7)]
        counts = {oracle_enumerate_masked(params, target, m) for m in masks}
        assert counts == {2 ** params.t - 1}

    def test_mask_validation(self):
        params = AttackParams(12, 2, 8, 3)
        with pytest.raises(UsageError):
            oracle_enumerate_masked(params, 0, (0, 1))          # too few
        with pytest.raises(UsageError):
            oracle_enumerate_masked(params, 0, (0, 1, 8))       # outside middle


class TestMonteCarlo:
    def test_zero_attempts(self):
        params = AttackParams(10, 3, 4, 2)
        assert simulate_lazy_attack(params, 0, random.Random(1), trials=100) == 0.0

    def test_single_attempt_rate_matches_exact_q(self):
        params = AttackParams(10, 3, 4, 2)
        trials = 1_000_000
        rate = simulate_lazy_attack(params, 1, random.Random(99), trials=trials)
        p_exact = 10 / 1024
        sigma = math.sqrt(p_exact * (1 - p_exact) / trials)
        assert abs(rate - p_exact) < 5 * sigma

    def test_many_attempts_saturate(self):
        params = AttackParams(10, 3, 4, 2)
        q = float(q_no_preimage(params))
        attempts = 1
        while 1 - q ** attempts <= 0.99:
            attempts *= 2
        rate = simulate_lazy_attack(params, attempts, random.Random(5), trials=300)
        assert rate > 0.95
